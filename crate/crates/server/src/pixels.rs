use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clicktionary_core::protocol::PixelSource;
use clicktionary_core::Manifest;

/// Image bytes read lazily from the manifest's `path` entries, resolved
/// against the manifest's directory. Files hold raw RGB, row-major,
/// `width * height * 3` bytes; anything else is treated as missing and the
/// round is played without pixels.
#[derive(Debug)]
pub struct FilePixels {
    paths: HashMap<String, PathBuf>,
    expected_len: usize,
    cache: Mutex<HashMap<String, Option<Arc<Vec<u8>>>>>,
}

impl FilePixels {
    pub fn new(manifest: &Manifest, base: &Path, width: u32, height: u32) -> Self {
        let paths = manifest
            .images()
            .iter()
            .filter(|i| !i.path.is_empty())
            .map(|i| (i.id.clone(), base.join(&i.path)))
            .collect();
        Self {
            paths,
            expected_len: width as usize * height as usize * 3,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn load(&self, image_id: &str) -> Option<Arc<Vec<u8>>> {
        let path = self.paths.get(image_id)?;
        match std::fs::read(path) {
            Ok(bytes) if bytes.len() == self.expected_len => Some(Arc::new(bytes)),
            Ok(bytes) => {
                tracing::warn!(
                    image = image_id,
                    path = %path.display(),
                    "expected {} raw RGB bytes, found {}",
                    self.expected_len,
                    bytes.len()
                );
                None
            }
            Err(e) => {
                tracing::warn!(image = image_id, path = %path.display(), "cannot read image: {e}");
                None
            }
        }
    }
}

impl PixelSource for FilePixels {
    fn image(&self, image_id: &str) -> Option<Arc<Vec<u8>>> {
        let mut cache = self.cache.lock().expect("pixel cache poisoned");
        if let Some(hit) = cache.get(image_id) {
            return hit.clone();
        }
        let loaded = self.load(image_id);
        cache.insert(image_id.to_string(), loaded.clone());
        loaded
    }
}
