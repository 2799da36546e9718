fn main() {
    std::process::exit(reoq::cli_main(std::env::args()));
}
