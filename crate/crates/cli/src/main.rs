fn main() {
    std::process::exit(spfp_cli::main_with_args(std::env::args_os()));
}
