fn main() {
    std::process::exit(gencov_cli::run(std::env::args_os()));
}
