fn main() -> std::process::ExitCode {
    let code = crosswalk_cli::main_with(std::env::args_os());
    std::process::ExitCode::from(code as u8)
}
