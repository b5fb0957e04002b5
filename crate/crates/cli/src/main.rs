fn main() {
    std::process::exit(nlpsi_cli::args::run_from(std::env::args_os()));
}
