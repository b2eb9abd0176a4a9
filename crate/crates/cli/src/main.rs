fn main() {
    std::process::exit(ordheck_cli::run(std::env::args_os()));
}
