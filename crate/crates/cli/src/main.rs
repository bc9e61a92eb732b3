fn main() -> std::process::ExitCode {
    toponav_cli::main_with_args(std::env::args_os())
}
