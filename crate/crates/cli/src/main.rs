use clap::Parser;
use editscore_cli::{run, Cli, EXIT_OK, EXIT_VALIDATION};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = run(cli);
    if result.exit_code == EXIT_OK {
        println!("{}", result.summary);
    } else {
        eprintln!("{}", result.summary);
    }
    std::process::exit(result.exit_code);
}
