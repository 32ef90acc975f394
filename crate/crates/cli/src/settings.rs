//! Layered run configuration: built-in defaults, then a key=value config
//! file, then command-line flags, each layer overriding the last. Every
//! effective value remembers which layer set it so the provenance dump in
//! the output directory is an honest record of the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    /// Resolved from the dataset after loading (feature-count families).
    Auto,
    ConfigFile,
    Flag,
}

impl Source {
    fn label(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::Auto => "auto",
            Source::ConfigFile => "config",
            Source::Flag => "flag",
        }
    }
}

/// The effective configuration of one run.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, (String, Source)>,
}

impl Settings {
    /// Starts from the full default table. Every key a run may consult is
    /// present from the beginning; unknown keys are typos by definition.
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        Settings {
            values: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), (v.to_string(), Source::Default)))
                .collect(),
        }
    }

    fn set(&mut self, key: &str, value: String, source: Source) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = (value, source);
                Ok(())
            }
            None => bail!("unknown configuration key `{key}`"),
        }
    }

    /// Applies a key=value config file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                );
            };
            self.set(key.trim(), value.trim().to_string(), Source::ConfigFile)
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    /// Applies one flag value if the flag was given.
    pub fn apply_flag<T: Display>(&mut self, key: &str, value: &Option<T>) -> Result<()> {
        if let Some(v) = value {
            self.set(key, v.to_string(), Source::Flag)?;
        }
        Ok(())
    }

    /// Overwrites a value resolved from the loaded data, unless a config
    /// file or flag already pinned it.
    pub fn resolve_auto(&mut self, key: &str, value: impl Display) {
        if let Some((_, source)) = self.values.get(key) {
            if matches!(source, Source::Default | Source::Auto) {
                self.values
                    .insert(key.to_string(), (value.to_string(), Source::Auto));
            }
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        &self
            .values
            .get(key)
            .unwrap_or_else(|| panic!("setting `{key}` has no default"))
            .0
    }

    /// Parses a required typed value.
    pub fn parse<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| anyhow::anyhow!("setting `{key}`: cannot parse `{raw}`: {e}"))
    }

    /// Window size: `none` (or empty) disables windowing; otherwise u >= 1.
    pub fn parse_window(&self) -> Result<Option<usize>> {
        let raw = self.raw("window");
        if raw.is_empty() || raw == "none" {
            return Ok(None);
        }
        let u: usize = raw
            .parse()
            .with_context(|| format!("setting `window`: cannot parse `{raw}`"))?;
        if u == 0 {
            bail!("setting `window`: must be at least 1 (or `none`)");
        }
        Ok(Some(u))
    }

    /// Comma-separated metric cutoffs, each >= 1.
    pub fn parse_cutoffs(&self) -> Result<Vec<usize>> {
        parse_cutoff_list(self.raw("cutoffs")).context("setting `cutoffs`")
    }

    /// A `k1,k2` hidden-dimension pair, or `auto`.
    pub fn parse_hidden_dims(&self) -> Result<Option<(usize, usize)>> {
        let raw = self.raw("hidden_dims");
        if raw == "auto" {
            return Ok(None);
        }
        let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            bail!("setting `hidden_dims`: expected `k1,k2` or `auto`, got `{raw}`");
        }
        let k1 = parts[0]
            .parse()
            .with_context(|| format!("setting `hidden_dims`: cannot parse `{raw}`"))?;
        let k2 = parts[1]
            .parse()
            .with_context(|| format!("setting `hidden_dims`: cannot parse `{raw}`"))?;
        Ok(Some((k1, k2)))
    }

    pub fn parse_learning_rate(&self) -> Result<Option<f64>> {
        let raw = self.raw("learning_rate");
        if raw == "auto" {
            return Ok(None);
        }
        let lr: f64 = raw
            .parse()
            .with_context(|| format!("setting `learning_rate`: cannot parse `{raw}`"))?;
        if !lr.is_finite() || lr <= 0.0 {
            bail!("setting `learning_rate`: must be positive");
        }
        Ok(Some(lr))
    }

    /// The provenance dump: every key, its effective value, and the layer
    /// that set it. The dump itself parses as a config file.
    pub fn provenance_dump(&self) -> String {
        let mut out = String::new();
        for (key, (value, source)) in &self.values {
            out.push_str(&format!("{key}={value}  # {}\n", source.label()));
        }
        out
    }
}

/// Parses a comma-separated cutoff list, each entry >= 1.
pub fn parse_cutoff_list(raw: &str) -> Result<Vec<usize>> {
    let cutoffs: Vec<usize> = raw
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse cutoff list `{raw}`"))?;
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        bail!("need at least one nonzero cutoff");
    }
    Ok(cutoffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Settings {
        Settings::with_defaults(&[("seed", "42"), ("window", "none"), ("cutoffs", "1,3")])
    }

    #[test]
    fn flags_override_config_file() {
        let mut s = base();
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "seed=7  # comment\n\n# full-line comment\nwindow=4\n").unwrap();
        s.apply_file(&cfg).unwrap();
        assert_eq!(s.raw("seed"), "7");
        s.apply_flag("seed", &Some(99u64)).unwrap();
        assert_eq!(s.parse::<u64>("seed").unwrap(), 99);
        assert_eq!(s.parse_window().unwrap(), Some(4));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut s = base();
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "sede=7\n").unwrap();
        let err = s.apply_file(&cfg).unwrap_err();
        assert!(format!("{err:#}").contains("unknown configuration key"));
    }

    #[test]
    fn auto_resolution_never_overrides_explicit_layers() {
        let mut s = base();
        s.resolve_auto("seed", 1);
        assert_eq!(s.raw("seed"), "1");
        s.apply_flag("seed", &Some(5u64)).unwrap();
        s.resolve_auto("seed", 2);
        assert_eq!(s.raw("seed"), "5");
    }

    #[test]
    fn provenance_dump_round_trips_as_config() {
        let mut s = base();
        s.apply_flag("window", &Some(3usize)).unwrap();
        let dump = s.provenance_dump();
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("dump.cfg");
        std::fs::write(&cfg, &dump).unwrap();
        let mut reloaded = base();
        reloaded.apply_file(&cfg).unwrap();
        assert_eq!(reloaded.parse_window().unwrap(), Some(3));
        assert_eq!(reloaded.raw("seed"), "42");
    }

    #[test]
    fn zero_window_is_rejected() {
        let mut s = base();
        s.apply_flag("window", &Some(0usize)).unwrap();
        assert!(s.parse_window().is_err());
    }
}
