fn main() {
    std::process::exit(aitvseg_cli::run(std::env::args_os()));
}
