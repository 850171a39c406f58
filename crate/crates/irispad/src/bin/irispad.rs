use clap::Parser;

fn main() {
    // clap exits with code 2 on usage errors by itself
    let cli = irispad::cli::Cli::parse();
    if let Err(e) = irispad::cli::run(cli) {
        eprintln!("error:{}: {e}", e.category());
        std::process::exit(1);
    }
}
