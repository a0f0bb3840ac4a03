fn main() {
    std::process::exit(spde_powvar::cli::run(std::env::args_os()));
}
