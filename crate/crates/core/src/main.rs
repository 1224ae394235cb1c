fn main() {
    std::process::exit(bifurcated_seg::cli::run(std::env::args_os()));
}
