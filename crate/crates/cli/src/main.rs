use clap::Parser;

fn main() {
    let cli = match entangleometer_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let code = entangleometer_cli::error::EXIT_CONFIG;
            eprintln!("{}", serde_json::json!({ "error": { "kind": "usage", "message": e.to_string(), "exit_code": code } }));
            std::process::exit(code);
        }
        Err(e) => e.exit(),
    };
    std::process::exit(entangleometer_cli::run(&cli));
}
