//! Map dataset actions onto a model's label vocabulary, lexically and with
//! precomputed embeddings, then judge a few predictions.
//!
//! ```bash
//! cargo run --example match_labels
//! ```

use ctrl_audit::labelmatch::{is_correct, match_lexical, match_semantic, EmbeddingTable, Vocabulary};

const EMBEDDINGS: &str = "\
label,d0,d1,d2
jog,0.9,0.1,0.0
golf,0.0,0.2,0.9
jogging,0.85,0.2,0.05
running on treadmill,0.7,0.4,0.1
golf driving,0.05,0.25,0.95
dancing ballet,0.1,0.9,0.2
";

fn main() -> ctrl_audit::Result<()> {
    let actions = Vocabulary::new("dataset", ["jog", "golf"])?;
    let model = Vocabulary::parse("kinetics", "jogging\nrunning on treadmill\ngolf driving\ndancing ballet\n")?;

    let lexical = match_lexical(&actions, &model, 2, 0.4)?;
    println!("lexical (k=2, threshold 0.4):");
    for (source, entry) in &lexical.entries {
        println!("  {source} -> {:?} {:?}", entry.targets, entry.scores);
    }
    println!("  unmatched: {:?}", lexical.unmatched);

    let emb = EmbeddingTable::parse_csv(EMBEDDINGS)?;
    let semantic = match_semantic(&actions, &model, &emb, 2, 0.6)?;
    println!("semantic (k=2, threshold 0.6):");
    for (source, entry) in &semantic.entries {
        let scores: Vec<String> = entry.scores.iter().map(|s| format!("{s:.3}")).collect();
        println!("  {source} -> {:?} [{}]", entry.targets, scores.join(", "));
    }

    for (pred, truth) in [("Jogging", "jog"), ("  running on treadmill ", "jog"), ("dancing ballet", "golf")] {
        println!("{pred:?} for {truth}: {}", is_correct(pred, truth, &semantic));
    }
    println!("{}", semantic.to_json()?);
    Ok(())
}
