fn main() {
    std::process::exit(driftgate_cli::dispatch(std::env::args_os()));
}
