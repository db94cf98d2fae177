fn main() {
    std::process::exit(armada::cli::run(std::env::args_os()));
}
