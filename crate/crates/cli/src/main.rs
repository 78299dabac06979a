fn main() {
    std::process::exit(llns_cli::run(std::env::args_os()));
}
