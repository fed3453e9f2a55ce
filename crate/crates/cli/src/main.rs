fn main() {
    std::process::exit(ftsmoe_cli::run(std::env::args_os()));
}
