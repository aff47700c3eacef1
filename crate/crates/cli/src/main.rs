fn main() {
    std::process::exit(subordinate_cli::run(std::env::args_os()));
}
