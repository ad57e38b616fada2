use std::process::ExitCode;

/// Caps the global rayon pool at `HELFRICH_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HELFRICH_THREADS") else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // a pool that already exists keeps its size
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        _ => Err(format!("HELFRICH_THREADS must be a positive integer, got {v:?}")),
    }
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(helfrich_cli::EXIT_USAGE);
    }
    let code = helfrich_cli::run(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code)
}
