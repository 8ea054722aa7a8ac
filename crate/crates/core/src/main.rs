fn main() {
    std::process::exit(omfbm::cli::run(std::env::args_os()));
}
