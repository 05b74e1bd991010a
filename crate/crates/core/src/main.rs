fn main() {
    std::process::exit(searchlight_rsa::cli::run(std::env::args_os()));
}
