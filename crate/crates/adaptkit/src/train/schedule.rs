/// Linear warmup from 0 to `peak` over `⌈warmup_ratio·max_steps⌉`
/// steps, then cosine decay to 0 at `max_steps`.
pub fn cosine_lr(step: usize, max_steps: usize, warmup_ratio: f64, peak: f64) -> f64 {
    debug_assert!(step <= max_steps);
    if max_steps == 0 {
        return 0.0;
    }
    let warmup = (warmup_ratio * max_steps as f64).ceil() as usize;
    if warmup > 0 && step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if step >= max_steps {
        return 0.0;
    }
    let progress = (step - warmup) as f64 / (max_steps - warmup) as f64;
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
