fn main() {
    std::process::exit(unimpc_cli::main_with_args(std::env::args_os()));
}
