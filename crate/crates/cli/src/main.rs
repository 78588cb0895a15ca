fn main() {
    std::process::exit(spiral_lattice_cli::run_cli(std::env::args_os()));
}
