fn main() {
    std::process::exit(ccb_cli::main_with_args(std::env::args_os()));
}
