fn main() {
    std::process::exit(geoint::cli::run(std::env::args_os()));
}
