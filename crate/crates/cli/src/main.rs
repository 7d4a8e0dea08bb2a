fn main() {
    std::process::exit(cld_cli::run(std::env::args_os()));
}
