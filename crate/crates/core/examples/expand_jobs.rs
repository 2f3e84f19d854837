//! Expand the default factor space into render jobs.
//!
//! ```bash
//! cargo run --example expand_jobs
//! ```

use ctrl_audit::jobgen::{expand_jobs, jobs_to_csv};
use ctrl_audit::FactorSpace;

fn main() -> ctrl_audit::Result<()> {
    let space = FactorSpace::default();
    let (tones, actions, motions, viewpoints, backgrounds) = space.sizes();
    let jobs = expand_jobs(&space, "renders/{action}/{motion_id}/{skin_tone}_{viewpoint}_{background}.mp4")?;
    println!("{tones} tones × {actions} actions × {motions} motions × {viewpoints} viewpoints × {backgrounds} backgrounds = {} jobs", jobs.len());
    for line in jobs_to_csv(&jobs).lines().take(6) {
        println!("{line}");
    }
    println!("...");
    let last = jobs.last().unwrap();
    println!("{} {}", last.job_id, last.output_path);
    Ok(())
}
