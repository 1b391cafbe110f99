fn main() {
    std::process::exit(modrecon::cli_main(std::env::args_os()));
}
