fn main() {
    std::process::exit(urllc_la_cli::main_with(std::env::args_os()));
}
