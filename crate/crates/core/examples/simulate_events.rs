//! Simulates a moving disk on a small sensor, writes it in the 5-byte
//! binary format, decodes it back and keeps the densest window.
//!
//! ```text
//! cargo run --release --example simulate_events -- [out.bin]
//! ```

use evgraph::events::{
    decode_bin, densest_window_select, encode_bin, simulate_dvs, write_csv, SceneScript, ShapeKind, ShapeSpec,
};

fn main() -> evgraph::Result<()> {
    let script = SceneScript {
        duration_us: 50_000,
        shapes: vec![ShapeSpec {
            kind: ShapeKind::Disk,
            size: 12.0,
            velocity: [0.4, 0.1],
            start: [16.0, 20.0],
            contrast: 2.5,
            onset_us: 0,
        }],
        background: 1.0,
        threshold: 0.2,
        step_us: 500,
        threshold_mismatch: 0.05,
        label: Some(0),
    };
    let stream = simulate_dvs(&script, 64, 48, 7)?;
    let on = stream.events.iter().filter(|e| e.p).count();
    println!(
        "{} events over {} us ({on} ON, {} OFF), box {:?}",
        stream.len(),
        stream.span(),
        stream.len() - on,
        stream.bbox
    );

    let bytes = encode_bin(&stream)?;
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, &bytes)?;
        println!("wrote {} bytes to {path}", bytes.len());
    }
    let decoded = decode_bin(&bytes, 64, 48)?;
    assert_eq!(decoded.events, stream.events);

    let window = densest_window_select(&decoded, 200)?;
    println!("densest 200-event window spans {} us; first events as CSV:", window.span());
    let head = evgraph::events::EventStream::new(window.events[..5].to_vec(), 64, 48)?;
    write_csv(std::io::stdout().lock(), &head)?;
    Ok(())
}
