fn main() {
    std::process::exit(pta_cli::main_with(std::env::args_os()));
}
