//! Factorial dataset manifest: parsing, validation and motion grouping.
//!
//! A manifest is a comma-separated file with the header
//! `video_id,path,action,motion_id,skin_tone,viewpoint,background,variant`.
//! Every field is restricted to the identifier alphabet `[a-z0-9_./-]`, so no
//! quoting is ever needed and serialization is byte-exact.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "video_id",
    "path",
    "action",
    "motion_id",
    "skin_tone",
    "viewpoint",
    "background",
    "variant",
];

/// Skin texture category of the rendered actor.
///
/// The declaration order is the canonical order used for matrix rows, pair
/// numbering and figure layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkinTone {
    White,
    African,
    Asian,
    Hispanic,
    Indian,
    MiddleEastern,
    SouthEastAsian,
}

impl SkinTone {
    pub const ALL: [SkinTone; 7] = [
        SkinTone::White,
        SkinTone::African,
        SkinTone::Asian,
        SkinTone::Hispanic,
        SkinTone::Indian,
        SkinTone::MiddleEastern,
        SkinTone::SouthEastAsian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkinTone::White => "white",
            SkinTone::African => "african",
            SkinTone::Asian => "asian",
            SkinTone::Hispanic => "hispanic",
            SkinTone::Indian => "indian",
            SkinTone::MiddleEastern => "middle_eastern",
            SkinTone::SouthEastAsian => "south_east_asian",
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SkinTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkinTone {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SkinTone::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Which subset of the dataset a clip belongs to: the single-tone ablation
/// renders (`initial`) or the skin-swept counterfactual renders (`modified`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Initial,
    Modified,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Initial => "initial",
            Variant::Modified => "modified",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "initial" => Ok(Variant::Initial),
            "modified" => Ok(Variant::Modified),
            other => Err(other.to_string()),
        }
    }
}

/// Levels of the five controlled dimensions.
///
/// Motion identifiers are per-action indices drawn from one shared namespace
/// (`cartwheel` motion `0`, `jog` motion `0`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpace {
    pub skin_tones: Vec<SkinTone>,
    pub actions: Vec<String>,
    pub motion_ids: Vec<String>,
    pub viewpoints: Vec<String>,
    pub backgrounds: Vec<String>,
}

impl Default for FactorSpace {
    /// 7 skin tones × 20 actions × 10 motions × 2 viewpoints × 3 backgrounds.
    fn default() -> Self {
        let actions = [
            "cartwheel", "celebrate", "clap", "cry", "dance", "drink", "golf", "jog", "jump",
            "kick", "lunge", "punch", "run", "sit", "squat", "stretch", "throw", "walk", "wave",
            "yoga",
        ];
        Self {
            skin_tones: SkinTone::ALL.to_vec(),
            actions: actions.iter().map(|s| s.to_string()).collect(),
            motion_ids: (0..10).map(|i| i.to_string()).collect(),
            viewpoints: vec!["far".into(), "near".into()],
            backgrounds: vec!["autumn".into(), "konzerthaus".into(), "stadium".into()],
        }
    }
}

impl FactorSpace {
    pub fn motions_per_action(&self) -> usize {
        self.motion_ids.len()
    }

    /// (skin tones, actions, motions, viewpoints, backgrounds)
    pub fn sizes(&self) -> (usize, usize, usize, usize, usize) {
        (
            self.skin_tones.len(),
            self.actions.len(),
            self.motion_ids.len(),
            self.viewpoints.len(),
            self.backgrounds.len(),
        )
    }

    pub fn product_size(&self) -> usize {
        let (s, a, m, v, b) = self.sizes();
        s * a * m * v * b
    }

    pub fn validate(&self) -> Result<()> {
        fn check<T: Ord + fmt::Debug>(name: &str, levels: &[T]) -> Result<()> {
            if levels.is_empty() {
                return Err(AuditError::InvalidParameter(format!("factor `{name}` has no levels")));
            }
            let distinct: BTreeSet<&T> = levels.iter().collect();
            if distinct.len() != levels.len() {
                return Err(AuditError::InvalidParameter(format!(
                    "factor `{name}` has duplicate levels"
                )));
            }
            Ok(())
        }
        check("skin_tone", &self.skin_tones)?;
        check("action", &self.actions)?;
        check("motion_id", &self.motion_ids)?;
        check("viewpoint", &self.viewpoints)?;
        check("background", &self.backgrounds)?;
        for level in self
            .actions
            .iter()
            .chain(&self.motion_ids)
            .chain(&self.viewpoints)
            .chain(&self.backgrounds)
        {
            if !is_identifier(level) {
                return Err(AuditError::InvalidParameter(format!(
                    "factor level `{level}` is outside [a-z0-9_./-]"
                )));
            }
        }
        Ok(())
    }

    fn infer(records: &[VideoRecord]) -> Self {
        let tones: BTreeSet<SkinTone> = records.iter().map(|r| r.skin_tone).collect();
        let distinct = |f: fn(&VideoRecord) -> &str| -> Vec<String> {
            let set: BTreeSet<&str> = records.iter().map(f).collect();
            set.into_iter().map(str::to_string).collect()
        };
        Self {
            skin_tones: tones.into_iter().collect(),
            actions: distinct(|r| &r.action),
            motion_ids: distinct(|r| &r.motion_id),
            viewpoints: distinct(|r| &r.viewpoint),
            backgrounds: distinct(|r| &r.background),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub path: String,
    pub action: String,
    pub motion_id: String,
    pub skin_tone: SkinTone,
    pub viewpoint: String,
    pub background: String,
    pub variant: Variant,
}

/// The five controlled attributes of a clip, in sort order.
pub type AttributeTuple = [String; 5];

impl VideoRecord {
    pub fn attributes(&self) -> AttributeTuple {
        [
            self.action.clone(),
            self.motion_id.clone(),
            self.skin_tone.to_string(),
            self.viewpoint.clone(),
            self.background.clone(),
        ]
    }

    /// Identity of the motion group the clip belongs to.
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            action: self.action.clone(),
            motion_id: self.motion_id.clone(),
            viewpoint: self.viewpoint.clone(),
            background: self.background.clone(),
        }
    }

    fn csv_line(&self) -> String {
        [
            self.video_id.as_str(),
            &self.path,
            &self.action,
            &self.motion_id,
            self.skin_tone.as_str(),
            &self.viewpoint,
            &self.background,
            self.variant.as_str(),
        ]
        .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub action: String,
    pub motion_id: String,
    pub viewpoint: String,
    pub background: String,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.action, self.motion_id, self.viewpoint, self.background)
    }
}

/// Parsed manifest. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<VideoRecord>,
    space: FactorSpace,
}

impl Manifest {
    /// Builds a manifest from records, enforcing identifier and uniqueness rules.
    pub fn from_records(records: Vec<VideoRecord>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if !ids.insert(r.video_id.as_str()) {
                return Err(AuditError::DuplicateVideoId(r.video_id.clone()));
            }
        }
        let space = FactorSpace::infer(&records);
        Ok(Self { records, space })
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_' | b'.' | b'/' | b'-'))
}

/// Parses a manifest CSV.
pub fn parse_manifest(csv_bytes: &[u8]) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_bytes);

    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != MANIFEST_HEADER {
        return Err(AuditError::Parse {
            line: 1,
            message: format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != MANIFEST_HEADER.len() {
            return Err(AuditError::Arity {
                line,
                expected: MANIFEST_HEADER.len(),
                found: row.len(),
            });
        }
        let field = |i: usize| -> Result<String> {
            let value = &row[i];
            if is_identifier(value) {
                Ok(value.to_string())
            } else {
                Err(AuditError::InvalidIdentifier {
                    line,
                    column: MANIFEST_HEADER[i].to_string(),
                    value: value.to_string(),
                })
            }
        };
        let skin_tone = row[4]
            .parse::<SkinTone>()
            .map_err(|value| AuditError::UnknownSkinTone { line, value })?;
        let variant = row[7].parse::<Variant>().map_err(|value| AuditError::Parse {
            line,
            message: format!("unknown variant `{value}`"),
        })?;
        records.push(VideoRecord {
            video_id: field(0)?,
            path: field(1)?,
            action: field(2)?,
            motion_id: field(3)?,
            skin_tone,
            viewpoint: field(5)?,
            background: field(6)?,
            variant,
        });
    }
    Manifest::from_records(records)
}

fn csv_error(err: csv::Error, fallback_line: u64) -> AuditError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    AuditError::Parse { line, message: err.to_string() }
}

/// Outcome of a factorial completeness check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub complete: bool,
    pub missing: Vec<AttributeTuple>,
    pub duplicated: Vec<AttributeTuple>,
}

impl ValidationReport {
    /// Compares observed tuples against an expected set.
    pub(crate) fn compare<'a>(
        expected: BTreeSet<AttributeTuple>,
        observed: impl IntoIterator<Item = &'a VideoRecord>,
    ) -> Self {
        let mut seen: BTreeMap<AttributeTuple, usize> = BTreeMap::new();
        for r in observed {
            *seen.entry(r.attributes()).or_default() += 1;
        }
        let missing: Vec<AttributeTuple> =
            expected.into_iter().filter(|t| !seen.contains_key(t)).collect();
        let duplicated: Vec<AttributeTuple> =
            seen.into_iter().filter(|(_, n)| *n > 1).map(|(t, _)| t).collect();
        Self { complete: missing.is_empty() && duplicated.is_empty(), missing, duplicated }
    }
}

/// Checks that every combination of factor levels appears exactly once.
///
/// When the manifest holds only `initial` rows (the single-tone ablation
/// subset), the skin dimension is not swept: each (action, motion) is expected
/// at every viewpoint and background with the tone(s) its initial rows carry.
/// A motion with no rows at all is then reported with skin tone `*`.
pub fn validate_factorial(manifest: &Manifest) -> ValidationReport {
    let space = manifest.space();
    let initial_only = !manifest.is_empty()
        && manifest.records().iter().all(|r| r.variant == Variant::Initial);

    let mut initial_tones: BTreeMap<(&str, &str), BTreeSet<String>> = BTreeMap::new();
    if initial_only {
        for r in manifest.records() {
            initial_tones
                .entry((&r.action, &r.motion_id))
                .or_default()
                .insert(r.skin_tone.to_string());
        }
    }
    let all_tones: BTreeSet<String> = space.skin_tones.iter().map(|t| t.to_string()).collect();
    let wildcard: BTreeSet<String> = BTreeSet::from(["*".to_string()]);

    let mut expected = BTreeSet::new();
    for action in &space.actions {
        for motion in &space.motion_ids {
            let tones = if initial_only {
                initial_tones.get(&(action.as_str(), motion.as_str())).unwrap_or(&wildcard)
            } else {
                &all_tones
            };
            for tone in tones {
                for vp in &space.viewpoints {
                    for bg in &space.backgrounds {
                        expected.insert([
                            action.clone(),
                            motion.clone(),
                            tone.clone(),
                            vp.clone(),
                            bg.clone(),
                        ]);
                    }
                }
            }
        }
    }
    ValidationReport::compare(expected, manifest.records())
}

/// Clips that show one motion in one scene setting, keyed by skin tone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionGroup {
    pub action: String,
    pub motion_id: String,
    pub viewpoint: String,
    pub background: String,
    pub members: BTreeMap<SkinTone, String>,
    /// True when every skin tone of the manifest's factor space is present.
    pub complete: bool,
}

impl MotionGroup {
    pub fn key(&self) -> GroupKey {
        GroupKey {
            action: self.action.clone(),
            motion_id: self.motion_id.clone(),
            viewpoint: self.viewpoint.clone(),
            background: self.background.clone(),
        }
    }

    pub fn tones(&self) -> Vec<SkinTone> {
        self.members.keys().copied().collect()
    }
}

/// Partitions records into motion groups sorted by (action, motion, viewpoint, background).
pub fn group_motions(manifest: &Manifest) -> Result<Vec<MotionGroup>> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<SkinTone, String>> = BTreeMap::new();
    for r in manifest.records() {
        let key = r.group_key();
        let members = groups.entry(key.clone()).or_default();
        if members.insert(r.skin_tone, r.video_id.clone()).is_some() {
            return Err(AuditError::ToneCollision {
                group: key.to_string(),
                tone: r.skin_tone.to_string(),
            });
        }
    }
    let tones = &manifest.space().skin_tones;
    Ok(groups
        .into_iter()
        .map(|(key, members)| {
            let complete = tones.iter().all(|t| members.contains_key(t));
            MotionGroup {
                action: key.action,
                motion_id: key.motion_id,
                viewpoint: key.viewpoint,
                background: key.background,
                members,
                complete,
            }
        })
        .collect())
}

/// Builds the manifest that covers `space` exactly once.
///
/// Rows carrying `initial_tone` are marked `initial`, all others `modified`.
/// Video ids are `{action}_{motion}_{tone}_{viewpoint}_{background}`.
pub fn product_manifest(space: &FactorSpace, initial_tone: SkinTone) -> Result<Manifest> {
    space.validate()?;
    let mut records = Vec::with_capacity(space.product_size());
    for action in &space.actions {
        for motion in &space.motion_ids {
            for &tone in &space.skin_tones {
                for vp in &space.viewpoints {
                    for bg in &space.backgrounds {
                        let video_id = format!("{action}_{motion}_{tone}_{vp}_{bg}");
                        records.push(VideoRecord {
                            path: format!("videos/{video_id}.mp4"),
                            video_id,
                            action: action.clone(),
                            motion_id: motion.clone(),
                            skin_tone: tone,
                            viewpoint: vp.clone(),
                            background: bg.clone(),
                            variant: if tone == initial_tone {
                                Variant::Initial
                            } else {
                                Variant::Modified
                            },
                        });
                    }
                }
            }
        }
    }
    Manifest::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        MANIFEST_HEADER.join(",") + "\n"
    }

    #[test]
    fn empty_manifest() {
        let m = parse_manifest(header().as_bytes()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.space().sizes(), (0, 0, 0, 0, 0));
        assert!(validate_factorial(&m).complete);
    }

    #[test]
    fn default_product_sizes() {
        let m = product_manifest(&FactorSpace::default(), SkinTone::White).unwrap();
        let parsed = parse_manifest(m.to_csv().as_bytes()).unwrap();
        assert_eq!(parsed.len(), 8400);
        assert_eq!(parsed.space().sizes(), (7, 20, 10, 2, 3));
        let report = validate_factorial(&parsed);
        assert!(report.complete);
        assert!(report.missing.is_empty() && report.duplicated.is_empty());
        let groups = group_motions(&parsed).unwrap();
        assert_eq!(groups.len(), 1200);
        assert!(groups.iter().all(|g| g.complete && g.members.len() == 7));
    }

    #[test]
    fn duplicate_video_id_is_named() {
        let csv = header()
            + "v001,a.mp4,jog,0,white,near,autumn,initial\n"
            + "v001,b.mp4,jog,0,african,near,autumn,modified\n";
        let err = parse_manifest(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, AuditError::DuplicateVideoId(ref id) if id == "v001"));
        assert!(err.to_string().contains("v001"));
    }

    #[test]
    fn arity_error_has_line_number() {
        let csv = header()
            + "v1,a.mp4,jog,0,white,near,autumn,initial\n"
            + "v2,b.mp4,jog,0,white,near\n";
        match parse_manifest(csv.as_bytes()).unwrap_err() {
            AuditError::Arity { line, expected, found } => {
                assert_eq!((line, expected, found), (3, 8, 6));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_skin_tone() {
        let csv = header() + "v1,a.mp4,jog,0,purple,near,autumn,initial\n";
        assert!(matches!(
            parse_manifest(csv.as_bytes()),
            Err(AuditError::UnknownSkinTone { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_bad_header_and_identifiers() {
        let csv = "video_id,path\n";
        assert!(matches!(parse_manifest(csv.as_bytes()), Err(AuditError::Parse { line: 1, .. })));
        let csv = header() + "v1,a.mp4,Jog Fast,0,white,near,autumn,initial\n";
        assert!(matches!(
            parse_manifest(csv.as_bytes()),
            Err(AuditError::InvalidIdentifier { .. })
        ));
    }

    #[test]
    fn one_missing_and_one_duplicated() {
        let full = product_manifest(&FactorSpace::default(), SkinTone::White).unwrap();
        let mut records = full.records().to_vec();
        let removed = records.remove(1234);
        let report = validate_factorial(&Manifest::from_records(records.clone()).unwrap());
        assert!(!report.complete);
        assert_eq!(report.missing, vec![removed.attributes()]);

        let mut dup = full.records()[77].clone();
        dup.video_id = "extra".into();
        let mut records = full.records().to_vec();
        records.push(dup.clone());
        let report = validate_factorial(&Manifest::from_records(records).unwrap());
        assert!(!report.complete);
        assert!(report.missing.is_empty());
        assert_eq!(report.duplicated, vec![dup.attributes()]);
    }

    #[test]
    fn initial_only_manifest_ignores_skin_sweep() {
        let space = FactorSpace {
            skin_tones: vec![SkinTone::White],
            actions: vec!["jog".into(), "yoga".into()],
            motion_ids: vec!["0".into(), "1".into()],
            viewpoints: vec!["far".into(), "near".into()],
            backgrounds: vec!["autumn".into()],
        };
        let mut records = product_manifest(&space, SkinTone::White).unwrap().records().to_vec();
        // a different tone for one action, as allowed when tones vary per action
        for r in records.iter_mut().filter(|r| r.action == "yoga") {
            r.skin_tone = SkinTone::Indian;
        }
        let m = Manifest::from_records(records).unwrap();
        assert!(validate_factorial(&m).complete);
    }

    #[test]
    fn single_group_and_incomplete_group() {
        let space = FactorSpace {
            actions: vec!["cartwheel".into()],
            motion_ids: vec!["0".into()],
            viewpoints: vec!["far".into()],
            backgrounds: vec!["stadium".into()],
            ..FactorSpace::default()
        };
        let m = product_manifest(&space, SkinTone::White).unwrap();
        let groups = group_motions(&m).unwrap();
        assert_eq!(groups.len(), 1);
        assert!(groups[0].complete);

        // second group lacking `asian`
        let mut records = m.records().to_vec();
        for r in m.records() {
            if r.skin_tone != SkinTone::Asian {
                let mut r = r.clone();
                r.motion_id = "1".into();
                r.video_id.push_str("_b");
                records.push(r);
            }
        }
        let groups = group_motions(&Manifest::from_records(records).unwrap()).unwrap();
        assert_eq!(groups.len(), 2);
        assert!(groups[0].complete);
        assert!(!groups[1].complete);
        assert_eq!(groups[1].members.len(), 6);
        assert!(!groups[1].members.contains_key(&SkinTone::Asian));
    }

    #[test]
    fn tone_collision_in_group_is_error() {
        let csv = header()
            + "v1,a.mp4,jog,0,white,near,autumn,initial\n"
            + "v2,b.mp4,jog,0,white,near,autumn,modified\n";
        let m = parse_manifest(csv.as_bytes()).unwrap();
        assert!(matches!(group_motions(&m), Err(AuditError::ToneCollision { .. })));
    }

    #[test]
    fn skin_tone_names_round_trip() {
        for t in SkinTone::ALL {
            assert_eq!(t.as_str().parse::<SkinTone>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert_eq!(SkinTone::ALL.iter().map(|t| t.index()).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
    }
}
