fn main() {
    std::process::exit(ionheat_cli::dispatch(std::env::args()));
}
