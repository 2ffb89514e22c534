use clap::Parser;

fn main() {
    let cli = lrad_cli::Cli::parse();
    match lrad_cli::run(cli) {
        Ok(out) => println!("{}", out.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
