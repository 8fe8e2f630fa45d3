fn main() {
    let status = scene_synth::cli::dispatch(std::env::args_os());
    std::process::exit(status.0);
}
