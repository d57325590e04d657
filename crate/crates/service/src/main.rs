fn main() {
    std::process::exit(pni_service::cli::run());
}
