fn main() {
    std::process::exit(dpage_cli::run(std::env::args_os()));
}
