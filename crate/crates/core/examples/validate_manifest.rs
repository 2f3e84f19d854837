//! Parse a manifest, check that it covers its factor product, and group it
//! into motion groups.
//!
//! ```bash
//! cargo run --example validate_manifest
//! ```

use ctrl_audit::manifest::{group_motions, parse_manifest, product_manifest, validate_factorial, FactorSpace};
use ctrl_audit::SkinTone;

fn main() -> ctrl_audit::Result<()> {
    let space = FactorSpace {
        actions: vec!["jog".into(), "wave".into()],
        motion_ids: vec!["0".into(), "1".into()],
        ..FactorSpace::default()
    };
    let csv = product_manifest(&space, SkinTone::White)?.to_csv();
    println!("{} manifest rows, header: {}", csv.lines().count() - 1, csv.lines().next().unwrap());

    // drop one clip to see how gaps are reported
    let gappy: String = csv.lines().filter(|l| !l.starts_with("jog_1_asian_near_stadium,")).map(|l| format!("{l}\n")).collect();
    let manifest = parse_manifest(gappy.as_bytes())?;
    let report = validate_factorial(&manifest);
    println!("complete: {}", report.complete);
    for tuple in &report.missing {
        println!("missing: {}", tuple.join(" / "));
    }

    let groups = group_motions(&manifest)?;
    let complete = groups.iter().filter(|g| g.complete).count();
    println!("{} motion groups, {complete} complete", groups.len());
    for g in groups.iter().filter(|g| !g.complete) {
        println!("incomplete: {} ({} of 7 tones)", g.key(), g.members.len());
    }
    Ok(())
}
