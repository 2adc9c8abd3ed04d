fn main() {
    std::process::exit(hfo_core::cli::run(std::env::args_os()));
}
