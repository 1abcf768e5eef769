//! Package metadata: manifests, packuments and the stores that serve them.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::semver::{max_satisfying, parse_range, parse_version, Version, VersionRange};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read snapshot {path}: {source}")]
    SourceUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("snapshot contains no valid packuments")]
    EmptySnapshot,
    #[error("package not found: {0}")]
    PackageNotFound(String),
    #[error("no version of {name} satisfies {requested}")]
    NoSatisfyingVersion { name: String, requested: String },
    #[error("unsupported dependency specifier for {name}: {spec:?}")]
    UnsupportedSpec { name: String, spec: String },
    #[error("remote registry error for {name}: {message}")]
    Remote { name: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerMeta {
    #[serde(default)]
    pub optional: bool,
}

/// One published version of a package.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub name: String,
    pub version: Version,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub dependencies: BTreeMap<String, String>,
    #[serde(rename = "peerDependencies", skip_serializing_if = "BTreeMap::is_empty")]
    pub peer_dependencies: BTreeMap<String, String>,
    #[serde(rename = "peerDependenciesMeta", skip_serializing_if = "BTreeMap::is_empty")]
    pub peer_dependencies_meta: BTreeMap<String, PeerMeta>,
}

impl Manifest {
    pub fn new(name: impl Into<String>, version: Version) -> Self {
        Manifest {
            name: name.into(),
            version,
            dependencies: BTreeMap::new(),
            peer_dependencies: BTreeMap::new(),
            peer_dependencies_meta: BTreeMap::new(),
        }
    }

    pub fn with_dep(mut self, name: &str, spec: &str) -> Self {
        self.dependencies.insert(name.to_string(), spec.to_string());
        self.normalize();
        self
    }

    pub fn with_peer(mut self, name: &str, spec: &str) -> Self {
        self.peer_dependencies.insert(name.to_string(), spec.to_string());
        self.normalize();
        self
    }

    pub fn with_optional_peer(mut self, name: &str, spec: &str) -> Self {
        self.peer_dependencies_meta
            .insert(name.to_string(), PeerMeta { optional: true });
        self.with_peer(name, spec)
    }

    /// A name listed as both a regular and a peer dependency is kept as a
    /// peer only.
    pub fn normalize(&mut self) {
        let peers = &self.peer_dependencies;
        self.dependencies.retain(|name, _| !peers.contains_key(name));
    }

    pub fn is_optional_peer(&self, name: &str) -> bool {
        self.peer_dependencies_meta
            .get(name)
            .is_some_and(|meta| meta.optional)
    }

    /// Peer declarations that take part in resolution, in name order.
    pub fn required_peers(&self) -> impl Iterator<Item = (&String, &String)> {
        self.peer_dependencies
            .iter()
            .filter(|(name, _)| !self.is_optional_peer(name))
    }

    pub fn has_peers(&self) -> bool {
        !self.peer_dependencies.is_empty()
    }

    pub fn has_dependencies(&self) -> bool {
        !self.dependencies.is_empty() || !self.peer_dependencies.is_empty()
    }
}

/// Registry document for one package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packument {
    pub name: String,
    pub versions: BTreeMap<Version, Arc<Manifest>>,
    pub dist_tags: BTreeMap<String, Version>,
    pub times: BTreeMap<Version, DateTime<Utc>>,
}

impl Packument {
    pub fn new(name: impl Into<String>) -> Self {
        Packument {
            name: name.into(),
            versions: BTreeMap::new(),
            dist_tags: BTreeMap::new(),
            times: BTreeMap::new(),
        }
    }

    /// Adds a manifest and points `latest` at the highest stable version.
    pub fn insert(&mut self, manifest: Manifest, time: Option<DateTime<Utc>>) {
        let version = manifest.version.clone();
        if let Some(t) = time {
            self.times.insert(version.clone(), t);
        }
        self.versions.insert(version, Arc::new(manifest));
        if let Some(latest) = default_latest(&self.versions) {
            self.dist_tags.insert("latest".into(), latest);
        }
    }

    pub fn manifest(&self, v: &Version) -> Option<&Arc<Manifest>> {
        self.versions.get(v)
    }

    /// Release time, or `None` when the registry document carries no
    /// timestamp. Undated versions are left out of dated statistics.
    pub fn release_time(&self, v: &Version) -> Option<DateTime<Utc>> {
        self.times.get(v).copied()
    }

    pub fn to_json(&self) -> Value {
        let versions: serde_json::Map<String, Value> = self
            .versions
            .iter()
            .map(|(v, m)| (v.to_string(), serde_json::to_value(m.as_ref()).expect("manifest serializes")))
            .collect();
        let tags: BTreeMap<&String, String> = self.dist_tags.iter().map(|(k, v)| (k, v.to_string())).collect();
        let times: BTreeMap<String, String> = self
            .times
            .iter()
            .map(|(v, t)| (v.to_string(), t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)))
            .collect();
        serde_json::json!({
            "name": self.name,
            "versions": versions,
            "dist-tags": tags,
            "time": times,
        })
    }
}

fn default_latest(versions: &BTreeMap<Version, Arc<Manifest>>) -> Option<Version> {
    versions
        .keys()
        .rev()
        .find(|v| !v.is_prerelease())
        .or_else(|| versions.keys().next_back())
        .cloned()
}

fn string_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    let raw: Option<BTreeMap<String, Value>> = Option::deserialize(d)?;
    Ok(raw
        .unwrap_or_default()
        .into_iter()
        .filter_map(|(k, v)| match v {
            Value::String(s) => Some((k, s)),
            _ => None,
        })
        .collect())
}

fn meta_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, PeerMeta>, D::Error> {
    let raw: Option<BTreeMap<String, Value>> = Option::deserialize(d)?;
    Ok(raw
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| {
            let optional = v.get("optional").and_then(Value::as_bool).unwrap_or(false);
            (k, PeerMeta { optional })
        })
        .collect())
}

#[derive(Deserialize)]
struct RawManifest {
    name: Option<String>,
    version: String,
    #[serde(default, deserialize_with = "string_map")]
    dependencies: BTreeMap<String, String>,
    #[serde(default, rename = "peerDependencies", deserialize_with = "string_map")]
    peer_dependencies: BTreeMap<String, String>,
    #[serde(default, rename = "peerDependenciesMeta", deserialize_with = "meta_map")]
    peer_dependencies_meta: BTreeMap<String, PeerMeta>,
}

#[derive(Deserialize)]
struct RawPackument {
    name: String,
    versions: BTreeMap<String, Value>,
    #[serde(default, rename = "dist-tags", deserialize_with = "string_map")]
    dist_tags: BTreeMap<String, String>,
    #[serde(default, deserialize_with = "string_map")]
    time: BTreeMap<String, String>,
}

/// A problem found while importing; never fatal on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImportDiagnostic {
    pub location: String,
    pub message: String,
}

/// Parses a project manifest (`package.json` shape). A missing name or
/// version defaults to `project` / `0.0.0`.
pub fn parse_manifest(text: &str) -> Result<Manifest, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("malformed manifest: {e}"))?;
    let obj = value.as_object_mut().ok_or("manifest must be a JSON object")?;
    obj.entry("name").or_insert_with(|| Value::from("project"));
    obj.entry("version").or_insert_with(|| Value::from("0.0.0"));
    let raw: RawManifest = serde_json::from_value(value).map_err(|e| format!("malformed manifest: {e}"))?;
    let version = parse_version(&raw.version).map_err(|e| format!("manifest version: {e}"))?;
    let mut m = Manifest {
        name: raw.name.unwrap_or_else(|| "project".into()),
        version,
        dependencies: raw.dependencies,
        peer_dependencies: raw.peer_dependencies,
        peer_dependencies_meta: raw.peer_dependencies_meta,
    };
    m.normalize();
    Ok(m)
}

/// Parses one packument document, dropping (and reporting) individual
/// versions or tags that are malformed.
pub fn parse_packument(text: &str, location: &str, diags: &mut Vec<ImportDiagnostic>) -> Option<Packument> {
    let raw: RawPackument = match serde_json::from_str(text) {
        Ok(raw) => raw,
        Err(e) => {
            diags.push(ImportDiagnostic {
                location: location.to_string(),
                message: format!("malformed packument: {e}"),
            });
            return None;
        }
    };
    let mut note = |message: String| {
        diags.push(ImportDiagnostic {
            location: format!("{location} ({})", raw.name),
            message,
        })
    };
    let mut pack = Packument::new(raw.name.clone());
    for (key, value) in raw.versions {
        let manifest: RawManifest = match serde_json::from_value(value) {
            Ok(m) => m,
            Err(e) => {
                note(format!("version {key}: malformed manifest: {e}"));
                continue;
            }
        };
        let version = match parse_version(&key) {
            Ok(v) => v,
            Err(e) => {
                note(format!("version key {key}: {e}"));
                continue;
            }
        };
        match parse_version(&manifest.version) {
            Ok(mv) if mv == version => {}
            _ => {
                note(format!("version key {key} disagrees with manifest version {}", manifest.version));
                continue;
            }
        }
        if manifest.name.as_deref().is_some_and(|n| n != raw.name) {
            note(format!("version {key}: manifest name differs from packument name"));
        }
        let mut m = Manifest {
            name: raw.name.clone(),
            version: version.clone(),
            dependencies: manifest.dependencies,
            peer_dependencies: manifest.peer_dependencies,
            peer_dependencies_meta: manifest.peer_dependencies_meta,
        };
        m.normalize();
        if let Some(t) = raw.time.get(&key) {
            match DateTime::parse_from_rfc3339(t) {
                Ok(t) => {
                    pack.times.insert(version.clone(), t.with_timezone(&Utc));
                }
                Err(_) => note(format!("version {key}: unparseable time {t:?}")),
            }
        }
        pack.versions.insert(version, Arc::new(m));
    }
    for (tag, target) in raw.dist_tags {
        match parse_version(&target) {
            Ok(v) if pack.versions.contains_key(&v) => {
                pack.dist_tags.insert(tag, v);
            }
            _ => note(format!("dist-tag {tag} points at unknown version {target}")),
        }
    }
    if !pack.versions.is_empty() && !pack.dist_tags.contains_key("latest") {
        if let Some(latest) = default_latest(&pack.versions) {
            note(format!("no usable latest tag; using {latest}"));
            pack.dist_tags.insert("latest".into(), latest);
        }
    }
    Some(pack)
}

/// What a dependency declaration asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requested {
    Range(VersionRange),
    Tag(String),
}

impl Requested {
    /// Ranges first; otherwise a bare identifier is taken as a dist-tag.
    pub fn parse(name: &str, text: &str) -> Result<Self, RegistryError> {
        if let Ok(r) = parse_range(text) {
            return Ok(Requested::Range(r));
        }
        let t = text.trim();
        let tag_like = !t.is_empty()
            && t.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !t.starts_with(|c: char| c.is_ascii_digit() || c == 'v');
        if tag_like {
            Ok(Requested::Tag(t.to_string()))
        } else {
            Err(RegistryError::UnsupportedSpec {
                name: name.to_string(),
                spec: text.to_string(),
            })
        }
    }
}

/// Anything that can hand out packuments by name.
pub trait PackumentSource: Send + Sync {
    fn packument(&self, name: &str) -> Result<Arc<Packument>, RegistryError>;
}

/// Deterministic highest-satisfying (or dist-tag) selection.
pub fn select_version(
    source: &dyn PackumentSource,
    name: &str,
    requested: &Requested,
) -> Result<(Version, Arc<Manifest>), RegistryError> {
    let pack = source.packument(name)?;
    let chosen = match requested {
        Requested::Tag(tag) => pack.dist_tags.get(tag),
        Requested::Range(range) => max_satisfying(pack.versions.keys(), range),
    };
    let no_match = || RegistryError::NoSatisfyingVersion {
        name: name.to_string(),
        requested: match requested {
            Requested::Tag(t) => t.clone(),
            Requested::Range(r) => r.to_string(),
        },
    };
    let v = chosen.ok_or_else(no_match)?;
    let manifest = pack.manifest(v).ok_or_else(no_match)?;
    Ok((v.clone(), Arc::clone(manifest)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Ndjson,
    Directory,
}

impl SnapshotFormat {
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            SnapshotFormat::Directory
        } else {
            SnapshotFormat::Ndjson
        }
    }
}

/// Scoped names are stored with `/` percent-encoded.
pub fn encode_name(name: &str) -> String {
    name.replace('/', "%2f")
}

pub fn decode_name(encoded: &str) -> String {
    encoded.replace("%2f", "/").replace("%2F", "/")
}

/// In-memory packument index built from a file snapshot. Read-only once
/// imported.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    packuments: HashMap<String, Arc<Packument>>,
    source: Option<PathBuf>,
    diagnostics: Vec<ImportDiagnostic>,
}

impl SnapshotStore {
    pub fn from_packuments(packs: impl IntoIterator<Item = Packument>) -> Self {
        SnapshotStore {
            packuments: packs.into_iter().map(|p| (p.name.clone(), Arc::new(p))).collect(),
            source: None,
            diagnostics: Vec::new(),
        }
    }

    /// Builds a store from loose manifests, grouping them by package name.
    pub fn from_manifests(manifests: impl IntoIterator<Item = Manifest>) -> Self {
        let mut packs: BTreeMap<String, Packument> = BTreeMap::new();
        for m in manifests {
            packs
                .entry(m.name.clone())
                .or_insert_with(|| Packument::new(m.name.clone()))
                .insert(m, None);
        }
        Self::from_packuments(packs.into_values())
    }

    pub fn import_ndjson<R: BufRead>(reader: R) -> Result<Self, RegistryError> {
        let mut store = SnapshotStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| RegistryError::SourceUnreadable {
                path: PathBuf::from("<stream>"),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let location = format!("line {}", i + 1);
            if let Some(p) = parse_packument(&line, &location, &mut store.diagnostics) {
                store.add(p, &location);
            }
        }
        store.finish()
    }

    pub fn import_directory(dir: &Path) -> Result<Self, RegistryError> {
        let unreadable = |source| RegistryError::SourceUnreadable {
            path: dir.to_path_buf(),
            source,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(unreadable)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut store = SnapshotStore {
            source: Some(dir.to_path_buf()),
            ..Default::default()
        };
        for path in files {
            let location = path.display().to_string();
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    store.diagnostics.push(ImportDiagnostic {
                        location,
                        message: format!("unreadable: {e}"),
                    });
                    continue;
                }
            };
            if let Some(p) = parse_packument(&text, &location, &mut store.diagnostics) {
                let stem = path.file_stem().map(|s| decode_name(&s.to_string_lossy()));
                if stem.as_deref() != Some(p.name.as_str()) {
                    store.diagnostics.push(ImportDiagnostic {
                        location: location.clone(),
                        message: format!("file name does not match package name {}", p.name),
                    });
                }
                store.add(p, &location);
            }
        }
        store.finish()
    }

    pub fn import(path: &Path, format: SnapshotFormat) -> Result<Self, RegistryError> {
        let mut store = match format {
            SnapshotFormat::Directory => Self::import_directory(path)?,
            SnapshotFormat::Ndjson => {
                let file = File::open(path).map_err(|source| RegistryError::SourceUnreadable {
                    path: path.to_path_buf(),
                    source,
                })?;
                Self::import_ndjson(BufReader::new(file))?
            }
        };
        store.source = Some(path.to_path_buf());
        Ok(store)
    }

    fn add(&mut self, p: Packument, location: &str) {
        if self.packuments.contains_key(&p.name) {
            self.diagnostics.push(ImportDiagnostic {
                location: location.to_string(),
                message: format!("duplicate packument for {}; later record wins", p.name),
            });
        }
        self.packuments.insert(p.name.clone(), Arc::new(p));
    }

    fn finish(self) -> Result<Self, RegistryError> {
        if self.packuments.is_empty() {
            Err(RegistryError::EmptySnapshot)
        } else {
            Ok(self)
        }
    }

    pub fn get_packument(&self, name: &str) -> Result<&Arc<Packument>, RegistryError> {
        self.packuments
            .get(name)
            .ok_or_else(|| RegistryError::PackageNotFound(name.to_string()))
    }

    pub fn diagnostics(&self) -> &[ImportDiagnostic] {
        &self.diagnostics
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn len(&self) -> usize {
        self.packuments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packuments.is_empty()
    }

    /// Packuments in name order.
    pub fn packuments(&self) -> impl Iterator<Item = &Arc<Packument>> {
        let mut all: Vec<_> = self.packuments.values().collect();
        all.sort_by(|a, b| a.name.cmp(&b.name));
        all.into_iter()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in self.packuments() {
            serde_json::to_writer(&mut out, &p.to_json())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_directory(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for p in self.packuments() {
            let path = dir.join(format!("{}.json", encode_name(&p.name)));
            let text = serde_json::to_string_pretty(&p.to_json())?;
            fs::write(path, text + "\n")?;
        }
        Ok(())
    }
}

impl PackumentSource for SnapshotStore {
    fn packument(&self, name: &str) -> Result<Arc<Packument>, RegistryError> {
        self.get_packument(name).cloned()
    }
}

/// Fetches packuments over HTTP (`GET <base>/<encoded-name>`) and keeps a
/// write-once on-disk cache. Fetches for one name are serialized.
pub struct RemoteRegistry {
    base_url: String,
    cache_dir: PathBuf,
    memo: Mutex<HashMap<String, Arc<Packument>>>,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    agent: ureq::Agent,
}

impl RemoteRegistry {
    pub fn new(base_url: &str, cache_dir: impl Into<PathBuf>) -> Self {
        RemoteRegistry {
            base_url: base_url.trim_end_matches('/').to_string(),
            cache_dir: cache_dir.into(),
            memo: Mutex::new(HashMap::new()),
            in_flight: Mutex::new(HashMap::new()),
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(30))
                .build(),
        }
    }

    fn cache_path(&self, name: &str) -> PathBuf {
        self.cache_dir.join(format!("{}.json", encode_name(name)))
    }

    fn remote_err(name: &str, message: impl ToString) -> RegistryError {
        RegistryError::Remote {
            name: name.to_string(),
            message: message.to_string(),
        }
    }

    fn fetch(&self, name: &str) -> Result<String, RegistryError> {
        let url = format!("{}/{}", self.base_url, encode_name(name));
        match self.agent.get(&url).set("Accept", "application/json").call() {
            Ok(resp) => resp.into_string().map_err(|e| Self::remote_err(name, e)),
            Err(ureq::Error::Status(404, _)) => Err(RegistryError::PackageNotFound(name.to_string())),
            Err(e) => Err(Self::remote_err(name, e)),
        }
    }

    fn load(&self, name: &str) -> Result<Packument, RegistryError> {
        let path = self.cache_path(name);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(_) => {
                let text = self.fetch(name)?;
                fs::create_dir_all(&self.cache_dir).map_err(|e| Self::remote_err(name, e))?;
                // write-once: an existing entry is never overwritten
                match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                    Ok(mut f) => f.write_all(text.as_bytes()).map_err(|e| Self::remote_err(name, e))?,
                    Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {}
                    Err(e) => return Err(Self::remote_err(name, e)),
                }
                text
            }
        };
        let mut diags = Vec::new();
        let pack = parse_packument(&text, &path.display().to_string(), &mut diags)
            .ok_or_else(|| Self::remote_err(name, "malformed packument"))?;
        for d in diags {
            log::warn!("{}: {}", d.location, d.message);
        }
        Ok(pack)
    }
}

impl PackumentSource for RemoteRegistry {
    fn packument(&self, name: &str) -> Result<Arc<Packument>, RegistryError> {
        if let Some(p) = self.memo.lock().expect("memo lock").get(name) {
            return Ok(Arc::clone(p));
        }
        let gate = Arc::clone(
            self.in_flight
                .lock()
                .expect("in-flight lock")
                .entry(name.to_string())
                .or_default(),
        );
        let _guard = gate.lock().expect("per-name lock");
        if let Some(p) = self.memo.lock().expect("memo lock").get(name) {
            return Ok(Arc::clone(p));
        }
        let pack = Arc::new(self.load(name)?);
        self.memo
            .lock()
            .expect("memo lock")
            .insert(name.to_string(), Arc::clone(&pack));
        Ok(pack)
    }
}
