//! Plain-text rendering of gateway status.

use riskwatch_services::{SessionState, Status};

const BAR: usize = 30;

pub fn status_line(s: &Status) -> String {
    let filled = (s.buffered * BAR).checked_div(s.threshold).unwrap_or(0).min(BAR);
    let mut line = format!(
        "session {} {:<10} [{}{}] {:>4}/{}",
        s.session_id,
        format!("{:?}", s.state),
        "#".repeat(filled),
        "-".repeat(BAR - filled),
        s.buffered,
        s.threshold
    );
    if s.pre_buffered > 0 {
        line.push_str(&format!(" (+{} queued)", s.pre_buffered));
    }
    match s.state {
        SessionState::Forwarding if s.attempts > 1 => {
            line.push_str(&format!(" attempt {}", s.attempts));
        }
        SessionState::Complete => {
            if let Some(v) = &s.verdict {
                line.push_str(&format!(
                    "\n  verdict: {} (confidence {:.3}, {} windows)",
                    v.label, v.confidence, v.window_count
                ));
                let shares: Vec<String> = v
                    .per_class_fraction
                    .iter()
                    .map(|(l, f)| format!("{l} {:.0}%", f * 100.0))
                    .collect();
                line.push_str(&format!("\n  windows: {}", shares.join(", ")));
            }
            if let Some(e) = &s.error {
                line.push_str(&format!("\n  failed: {e}"));
            }
            if let Some(ms) = s.latency_ms {
                line.push_str(&format!("\n  latency: {ms:.0} ms"));
            }
        }
        _ => {}
    }
    line
}
