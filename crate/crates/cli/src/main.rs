use clap::Parser;

fn main() {
    let cli = lsp_cli::Cli::parse();
    if let Err(e) = lsp_cli::run(cli) {
        let msg = format!("{e:#}").replace('\n', " ");
        eprintln!("lsp: error: {msg}");
        std::process::exit(1);
    }
}
