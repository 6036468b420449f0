fn main() {
    std::process::exit(quadgen::cli::run(std::env::args_os()));
}
