fn main() {
    std::process::exit(qkr::cli::run_from(std::env::args_os()));
}
