fn main() {
    std::process::exit(lasalle_cli::commands::run(std::env::args_os()));
}
