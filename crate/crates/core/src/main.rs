fn main() -> std::process::ExitCode {
    tenrpca::cli::main_with(std::env::args_os())
}
