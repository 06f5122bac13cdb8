/// Runs `f` inside a rayon pool with `jobs` workers (`0` means rayon's
/// default). Callers collect results in index order, so output does not
/// depend on the worker count.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
