use mhs::cli;

fn main() {
    if let Err(err) = cli::run_from(std::env::args_os()) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
