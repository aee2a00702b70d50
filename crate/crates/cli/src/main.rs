fn main() {
    std::process::exit(yn_crowd_cli::main_with_args(std::env::args_os()));
}
