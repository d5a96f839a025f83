fn main() {
    std::process::exit(ncamaps_runner::cli::run(std::env::args_os()));
}
