//! The on-disk workspace: a `workspace.toml` manifest naming every
//! registered table, trained view, and maintenance binding, plus the CSV
//! files those entries point at. Everything is plain CSV so any state the
//! CLI persists can be inspected (and edited) by hand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mixql::relation::Relation;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "workspace.toml";

/// Serialized workspace state. Tables map to CSV paths relative to the
/// workspace root; views and bindings carry the configuration needed to
/// reproduce or continue them.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub tables: BTreeMap<String, String>,
    #[serde(default)]
    pub views: BTreeMap<String, ViewEntry>,
    #[serde(default)]
    pub bindings: BTreeMap<String, BindingEntry>,
}

/// How a view was trained: the model family, source table, the dialect
/// script the trainer ran, and the training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewEntry {
    pub model: String,
    pub table: String,
    pub script: String,
    pub k: usize,
    pub iterations: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

/// A maintenance binding: inserts into and deletes from the table keep
/// the named view consistent through the trigger cascade.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingEntry {
    pub view: String,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub budget: usize,
    pub passes: u32,
    pub seed: u64,
    /// Maintenance statements already executed. The next statement
    /// shuffles with `seed + statements`, so the stochastic schedule
    /// continues across CLI invocations exactly as it would in-process.
    #[serde(default)]
    pub statements: u64,
    /// Keep the sufficient statistics persisted beside the view
    /// (`views/<view>.stats.csv`) instead of rebuilding them from the
    /// base table at every statement.
    #[serde(default = "default_true")]
    pub precompute_stats: bool,
}

fn default_true() -> bool {
    true
}

/// A loaded workspace: the manifest plus the root it resolves against.
#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Workspace {
    /// Opens the workspace at `root`, reading `workspace.toml` when it
    /// exists and starting empty otherwise. Every referenced file must
    /// exist and names must be unique across tables and views.
    pub fn open(root: &Path) -> Result<Workspace> {
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)
                .with_context(|| format!("reading {}", manifest_path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("parsing {}", manifest_path.display()))?
        } else {
            Manifest::default()
        };
        let ws = Workspace { root: root.to_path_buf(), manifest };
        ws.check()?;
        Ok(ws)
    }

    pub fn save(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root)
            .with_context(|| format!("creating {}", self.root.display()))?;
        let text = toml::to_string_pretty(&self.manifest).context("serializing manifest")?;
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn check(&self) -> Result<()> {
        for (name, rel_path) in &self.manifest.tables {
            let path = self.root.join(rel_path);
            if !path.exists() {
                bail!("table `{name}` points at missing file {}", path.display());
            }
            if self.manifest.views.contains_key(name) {
                bail!("`{name}` names both a table and a view");
            }
        }
        for (name, entry) in &self.manifest.views {
            let view = self.view_path(name);
            if !view.exists() {
                bail!("view `{name}` points at missing file {}", view.display());
            }
            let script = self.root.join(&entry.script);
            if !script.exists() {
                bail!("view `{name}` points at missing script {}", script.display());
            }
            if !self.manifest.tables.contains_key(&entry.table) {
                bail!("view `{name}` was trained on unregistered table `{}`", entry.table);
            }
        }
        for (table, binding) in &self.manifest.bindings {
            if !self.manifest.tables.contains_key(table) {
                bail!("binding on unregistered table `{table}`");
            }
            let Some(view) = self.manifest.views.get(&binding.view) else {
                bail!("binding on `{table}` targets unregistered view `{}`", binding.view);
            };
            if view.model != "gmm" {
                bail!(
                    "binding on `{table}` targets `{}` view `{}`; only gmm views are maintainable",
                    view.model,
                    binding.view
                );
            }
            if binding.precompute_stats && !self.stats_path(&binding.view).exists() {
                bail!(
                    "binding on `{table}` expects precomputed statistics at {}",
                    self.stats_path(&binding.view).display()
                );
            }
        }
        Ok(())
    }

    pub fn table_path(&self, name: &str) -> Result<PathBuf> {
        let rel = self
            .manifest
            .tables
            .get(name)
            .with_context(|| format!("no table named `{name}` is registered"))?;
        Ok(self.root.join(rel))
    }

    pub fn view_path(&self, name: &str) -> PathBuf {
        self.root.join("views").join(format!("{name}.csv"))
    }

    pub fn stats_path(&self, name: &str) -> PathBuf {
        self.root.join("views").join(format!("{name}.stats.csv"))
    }

    pub fn view_entry(&self, name: &str) -> Result<&ViewEntry> {
        self.manifest
            .views
            .get(name)
            .with_context(|| format!("no view named `{name}` is registered"))
    }

    pub fn load_table(&self, name: &str) -> Result<Relation> {
        let path = self.table_path(name)?;
        mixql::io::read_csv(&path)
            .with_context(|| format!("reading table `{name}` from {}", path.display()))
    }

    pub fn load_view(&self, name: &str) -> Result<Relation> {
        self.view_entry(name)?;
        let path = self.view_path(name);
        mixql::io::read_csv(&path)
            .with_context(|| format!("reading view `{name}` from {}", path.display()))
    }

    /// Writes a relation under the workspace root, creating directories.
    pub fn write_relation(&self, rel_path: &Path, rel: &Relation) -> Result<()> {
        let path = self.root.join(rel_path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
        mixql::io::write_csv(rel, &path)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_manifest_opens_empty() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        assert!(ws.manifest.tables.is_empty());
        assert!(ws.manifest.views.is_empty());
    }

    #[test]
    fn manifest_round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("data")).unwrap();
        std::fs::write(dir.path().join("data/t.csv"), "id,x\n1,\"[0.0]\"\n").unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        ws.manifest.tables.insert("t".into(), "data/t.csv".into());
        ws.save().unwrap();

        let back = Workspace::open(dir.path()).unwrap();
        assert_eq!(back.manifest.tables.get("t").unwrap(), "data/t.csv");
    }

    #[test]
    fn missing_table_file_is_rejected_at_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        ws.manifest.tables.insert("ghost".into(), "data/ghost.csv".into());
        ws.save().unwrap();

        let err = Workspace::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "got: {err}");
    }
}
