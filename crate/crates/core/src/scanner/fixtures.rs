//! Synthetic package sets: the two loop patterns, seeded variants of them,
//! and seeded random graphs.

use std::path::Path;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::registry::{Manifest, Packument, SnapshotFormat, SnapshotStore};
use crate::resolver::RootSpec;
use crate::semver::Version;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Pattern {
    A,
    B,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Pattern::A),
            "B" | "b" => Ok(Pattern::B),
            _ => Err(format!("unknown pattern {s:?} (expected A or B)")),
        }
    }
}

/// Largest intermediate chain `gen_pattern_fixture` accepts.
pub const MAX_INTERMEDIATES: usize = 8;

/// A package set plus the root to resolve and, when known by construction,
/// the expected verdict.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub label: String,
    pub manifests: Vec<Manifest>,
    pub root_name: String,
    pub root_version: Version,
    pub expected: Option<&'static str>,
}

impl Fixture {
    pub fn store(&self) -> SnapshotStore {
        SnapshotStore::from_manifests(self.manifests.iter().cloned())
    }

    pub fn root(&self) -> RootSpec {
        RootSpec::Package {
            name: self.root_name.clone(),
            requested: self.root_version.to_string(),
        }
    }

    pub fn packages(&self) -> usize {
        let mut names: Vec<&str> = self.manifests.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.len()
    }

    /// Writes the package set as a snapshot.
    pub fn write(&self, out: &Path, format: SnapshotFormat) -> std::io::Result<()> {
        let store = self.store();
        match format {
            SnapshotFormat::Directory => store.write_directory(out),
            SnapshotFormat::Ndjson => {
                if let Some(parent) = out.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                store.write_ndjson(std::fs::File::create(out)?)
            }
        }
    }
}

fn ver(major: u64) -> Version {
    Version::new(major, 0, 0)
}

fn m(name: &str, major: u64) -> Manifest {
    Manifest::new(name, ver(major))
}

fn caret(major: u64) -> String {
    format!("^{major}.0.0")
}

struct PatternNames {
    a: String,
    b: String,
    c: String,
    d: String,
    mid: Vec<String>,
}

impl PatternNames {
    fn new(prefix: &str, intermediates: usize) -> Self {
        let n = |s: &str| format!("{prefix}{s}");
        PatternNames {
            a: n("A"),
            b: n("B"),
            c: n("C"),
            d: n("D"),
            mid: (1..=intermediates).map(|i| n(&format!("I{i}"))).collect(),
        }
    }
}

/// Builds the pattern package set with versions `lo`/`hi` for the
/// contested package.
fn build_pattern(pattern: Pattern, names: &PatternNames, lo: u64, hi: u64) -> Vec<Manifest> {
    let PatternNames { a, b, c, d, mid } = names;
    let mut out = Vec::new();
    match pattern {
        Pattern::A => {
            // A -> B@hi -> (mids) -> C, C peer-requires B@lo
            out.push(m(a, 1).with_dep(b, &caret(hi)));
            out.push(m(b, lo));
            let first = mid.first().unwrap_or(c);
            out.push(m(b, hi).with_dep(first, "1.0.0"));
            for (i, name) in mid.iter().enumerate() {
                let next = mid.get(i + 1).unwrap_or(c);
                out.push(m(name, 1).with_dep(next, "1.0.0"));
            }
            out.push(m(c, 1).with_peer(b, &caret(lo)));
        }
        Pattern::B => {
            // A -> B, B peer-requires C@hi and (mids ->) D, D peer-requires C@lo
            out.push(m(a, 1).with_dep(b, "1.0.0"));
            let first = mid.first().unwrap_or(d);
            out.push(m(b, 1).with_peer(c, &caret(hi)).with_peer(first, "1.0.0"));
            for (i, name) in mid.iter().enumerate() {
                let next = mid.get(i + 1).unwrap_or(d);
                out.push(m(name, 1).with_peer(next, "1.0.0"));
            }
            out.push(m(c, lo));
            out.push(m(c, hi));
            out.push(m(d, 1).with_peer(c, &caret(lo)));
        }
    }
    out
}

/// The minimal package set realizing `pattern`, with `intermediates`
/// pass-through packages on the regular (A) or peer (B) path.
pub fn gen_pattern_fixture(pattern: Pattern, intermediates: usize) -> Result<Fixture, String> {
    if intermediates > MAX_INTERMEDIATES {
        return Err(format!("at most {MAX_INTERMEDIATES} intermediates are supported"));
    }
    let names = PatternNames::new("", intermediates);
    Ok(Fixture {
        label: format!("pattern-{pattern:?}-{intermediates}"),
        manifests: build_pattern(pattern, &names, 1, 2),
        root_name: names.a,
        root_version: ver(1),
        expected: Some("peerspin"),
    })
}

/// The xydesign project: antd reaches react through react-dom's peer
/// declaration while draft-js peer-requires an older react major.
pub fn motivating_fixture() -> (Manifest, Vec<Manifest>) {
    let project = Manifest::new("xydesign", Version::new(1, 0, 0))
        .with_dep("antd", "^5.0.0")
        .with_dep("draft-js", "^0.11.7");
    let registry = vec![
        Manifest::new("antd", Version::new(5, 12, 0)).with_peer("react-dom", "^18.0.0"),
        Manifest::new("react-dom", Version::new(18, 2, 0)).with_peer("react", "^18.2.0"),
        Manifest::new("draft-js", Version::new(0, 11, 7)).with_peer("react", "^16.0.0"),
        Manifest::new("react", Version::new(16, 14, 0)),
        Manifest::new("react", Version::new(18, 2, 0)),
    ];
    (project, registry)
}

fn leaf_chain(rng: &mut ChaCha8Rng, prefix: &str, len: usize) -> Vec<Manifest> {
    let names: Vec<String> = (0..len).map(|i| format!("{prefix}n{i}")).collect();
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let major = rng.gen_range(1..=3);
            let mut man = Manifest::new(name, Version::new(major, rng.gen_range(0..5), 0));
            if let Some(next) = names.get(i + 1) {
                man = man.with_dep(next, "*");
            }
            man
        })
        .collect()
}

/// A pattern fixture with renamed packages, shifted majors and a chain of
/// unrelated clean dependencies hung off the root.
pub fn gen_pattern_variant(seed: u64, prefix: &str) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = if rng.gen_bool(0.5) { Pattern::A } else { Pattern::B };
    let intermediates = rng.gen_range(0..=4);
    let lo = rng.gen_range(1..=4);
    let hi = lo + rng.gen_range(1..=3);
    let names = PatternNames::new(prefix, intermediates);
    let mut manifests = build_pattern(pattern, &names, lo, hi);
    let noise = rng.gen_range(0..=4);
    let chain = leaf_chain(&mut rng, prefix, noise);
    if let Some(first) = chain.first() {
        let attach = names.a.clone();
        for man in manifests.iter_mut().filter(|x| x.name == attach) {
            *man = man.clone().with_dep(&first.name, "*");
        }
    }
    manifests.extend(chain);
    Fixture {
        label: format!("variant-{seed}-{pattern:?}-{intermediates}"),
        manifests,
        root_name: names.a,
        root_version: ver(1),
        expected: Some("peerspin"),
    }
}

/// Shape controls for random graphs.
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub min_packages: usize,
    pub max_packages: usize,
    /// Single version per package and compatible ranges only.
    pub conflict_free: bool,
    pub regular_p: f64,
    pub peer_p: f64,
}

impl RandomShape {
    pub fn conflict_free() -> Self {
        RandomShape {
            min_packages: 3,
            max_packages: 14,
            conflict_free: true,
            regular_p: 0.3,
            peer_p: 0.15,
        }
    }

    pub fn mixed() -> Self {
        RandomShape {
            conflict_free: false,
            ..Self::conflict_free()
        }
    }
}

/// A random acyclic dependency graph over `pkg-<i>` names. Package `i` may
/// depend (regular or peer) only on packages with a larger index.
pub fn gen_random_fixture(seed: u64, shape: RandomShape, prefix: &str) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(shape.min_packages..=shape.max_packages);
    let names: Vec<String> = (0..n).map(|i| format!("{prefix}pkg-{i}")).collect();
    let majors: Vec<Vec<u64>> = (0..n)
        .map(|_| {
            if shape.conflict_free {
                vec![1]
            } else {
                let mut ms: Vec<u64> = (1..=3).filter(|_| rng.gen_bool(0.6)).collect();
                if ms.is_empty() {
                    ms.push(1);
                }
                ms
            }
        })
        .collect();
    let mut manifests = Vec::new();
    for i in 0..n {
        for &major in &majors[i] {
            let mut man = Manifest::new(&names[i], ver(major));
            for j in i + 1..n {
                let kind: f64 = rng.gen();
                if kind >= shape.regular_p + shape.peer_p {
                    continue;
                }
                let range = if shape.conflict_free {
                    ["^1.0.0", "*", ">=1.0.0", "1.x"].choose(&mut rng).expect("non-empty").to_string()
                } else {
                    match rng.gen_range(0..4) {
                        0 => "*".to_string(),
                        1 => format!(">={}.0.0", majors[j][0]),
                        _ => caret(*majors[j].choose(&mut rng).expect("non-empty")),
                    }
                };
                man = if kind < shape.regular_p {
                    man.with_dep(&names[j], &range)
                } else {
                    man.with_peer(&names[j], &range)
                };
            }
            manifests.push(man);
        }
    }
    let root_version = ver(*majors[0].last().expect("non-empty"));
    Fixture {
        label: format!("random-{seed}-{}", if shape.conflict_free { "clean" } else { "mixed" }),
        manifests,
        root_name: names[0].clone(),
        root_version,
        expected: shape.conflict_free.then_some("clean"),
    }
}

/// Adds synthetic release times (one year per version index, starting at
/// `first_year`) to a manifest list.
pub fn dated_store(manifests: &[Manifest], first_year: i32) -> SnapshotStore {
    let mut packs: std::collections::BTreeMap<String, Packument> = Default::default();
    for man in manifests {
        let pack = packs.entry(man.name.clone()).or_insert_with(|| Packument::new(man.name.clone()));
        let year = first_year + pack.versions.len() as i32;
        let time = Utc.with_ymd_and_hms(year, 6, 1, 0, 0, 0).single();
        pack.insert(man.clone(), time);
    }
    SnapshotStore::from_packuments(packs.into_values())
}
