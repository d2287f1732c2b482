use std::collections::HashMap;
use std::process::ExitCode;

fn main() -> ExitCode {
    let env: HashMap<String, String> = std::env::vars().collect();
    let code = olac_cli::run(std::env::args_os(), &env, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
