//! Layered settings: a sectioned `key = value` file, overridden by
//! `CLICKTIONARY_<SECTION>_<KEY>` environment variables, overridden in turn
//! by command-line flags.
//!
//! ```ini
//! [global]
//! seed = 7
//! data_dir = data
//!
//! [server]
//! listen = 0.0.0.0:7878
//! bot_wait_ms = 120000
//! ```
//!
//! Keys outside any section belong to `global`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const ENV_PREFIX: &str = "CLICKTIONARY_";

pub const SECTIONS: [&str; 8] = ["global", "server", "simulate", "export", "aggregate", "analyze", "compare", "leaderboard"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<(String, String), String>,
}

impl Settings {
    pub fn load_file(path: &Path) -> Result<Self, CliError> {
        let ini = ini::Ini::load_from_file(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut s = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("global").to_ascii_lowercase();
            if !SECTIONS.contains(&section.as_str()) {
                return Err(CliError::Usage(format!("config {}: unknown section [{section}]", path.display())));
            }
            for (k, v) in props.iter() {
                s.values.insert((section.clone(), k.to_ascii_lowercase()), v.to_string());
            }
        }
        Ok(s)
    }

    /// Applies `CLICKTIONARY_<SECTION>_<KEY>` variables. Variables naming an
    /// unknown section are ignored.
    pub fn overlay_env<I, K, V>(&mut self, vars: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(rest) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let Some((section, key)) = rest.split_once('_') else { continue };
            let section = section.to_ascii_lowercase();
            if key.is_empty() || !SECTIONS.contains(&section.as_str()) {
                continue;
            }
            self.values
                .insert((section, key.to_ascii_lowercase()), v.as_ref().to_string());
        }
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("[{section}] {key} = {v:?}: {e}"))),
        }
    }

    /// A flag value if given, else the configured one.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(section, key),
        }
    }
}
