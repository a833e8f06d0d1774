fn main() {
    std::process::exit(spinmux_cli::run(std::env::args_os()));
}
