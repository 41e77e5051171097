fn main() { std::process::exit(carlo_tools::app::main_with_args(std::env::args_os())) }
