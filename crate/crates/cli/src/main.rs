fn main() {
    std::process::exit(tdm_cli::main_with_args(std::env::args_os()));
}
