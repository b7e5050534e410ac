use std::collections::HashSet;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use snapgraph::Graph;

fn main() {
    let threads: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let per: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(50);
    let point_ops: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let g = Graph::new();
    let setup = g.register_thread().unwrap();
    for k in 0..1000 {
        g.add_vertex(k, setup);
    }
    for k in 0..1000 {
        g.add_edge(k, (k + 1) % 1000, setup);
        g.add_edge(k, (k + 17) % 1000, setup);
    }

    let start = Instant::now();
    let ptrs: Vec<Vec<usize>> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let g = &g;
                s.spawn(move || {
                    let tid = g.register_thread().unwrap();
                    let mut out = Vec::with_capacity(per);
                    for i in 0..per {
                        let snap = g.take_snapshot(tid);
                        out.push(Arc::as_ptr(&snap) as usize);
                        for j in 0..point_ops {
                            g.contains_vertex(((t * per + i + j) % 1000) as i64, tid);
                        }
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let elapsed = start.elapsed();

    let total: usize = ptrs.iter().map(Vec::len).sum();
    let distinct: HashSet<usize> = ptrs.into_iter().flatten().collect();
    println!(
        "threads={threads} per={per} pointops={point_ops}: {} calls, {} generations, share factor {:.2}, avg latency {:.0}us",
        total,
        distinct.len(),
        total as f64 / distinct.len() as f64,
        elapsed.as_micros() as f64 * threads as f64 / total as f64
    );
}
