//! The `.tstk` token pack container.
//!
//! ```text
//! magic "TSTK" | version u32 LE | header_len u32 LE | header JSON (header_len bytes)
//! | token values, f32 LE, total_count * dim, in pack order
//! | provenance, 3 x u32 LE per token (only if provenance_included)
//! ```
//!
//! The JSON header carries a `header_crc32` field: the CRC-32 of the header
//! bytes with that field's 8 hex digits set to `'0'`. Unknown keys are
//! ignored on read.
//!
//! Feature files use the same container: a `concat` pack with no
//! thumbnails whose sampled tokens are the per-frame tensors back to back.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ordering, PackMeta, Provenance, StrategyKind, TokenPack, TokenTensor};

pub const MAGIC: [u8; 4] = *b"TSTK";
pub const VERSION: u32 = 1;
/// Headers longer than this are rejected before allocation.
pub const MAX_HEADER_LEN: u32 = 1 << 20;

const CRC_PLACEHOLDER: &str = "00000000";
const CRC_KEY: &[u8] = b"\"header_crc32\":\"";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackHeader {
    pub strategy: StrategyKind,
    pub ordering: Ordering,
    pub n_frames: u64,
    pub n_thumb_frames: u64,
    pub n_thumbnails: u64,
    pub tokens_per_image: u64,
    pub dim: u64,
    pub sampled_count: u64,
    pub thumbnail_count: u64,
    pub total_count: u64,
    pub provenance_included: bool,
    pub source_label: String,
    // must stay the last field: the writer patches it in place
    pub header_crc32: String,
}

impl PackHeader {
    pub fn for_pack(pack: &TokenPack) -> Self {
        let meta = pack.meta();
        Self {
            strategy: meta.strategy,
            ordering: pack.ordering(),
            n_frames: meta.n_frames as u64,
            n_thumb_frames: meta.n_thumb_frames as u64,
            n_thumbnails: meta.n_thumbnails as u64,
            tokens_per_image: meta.tokens_per_image as u64,
            dim: pack.dim() as u64,
            sampled_count: pack.sampled_count() as u64,
            thumbnail_count: pack.thumbnail_count() as u64,
            total_count: pack.total_count() as u64,
            provenance_included: pack.has_provenance(),
            source_label: meta.source_label.clone(),
            header_crc32: CRC_PLACEHOLDER.to_owned(),
        }
    }

    /// Canonical JSON bytes with the checksum filled in.
    pub fn to_json(&self) -> Vec<u8> {
        let mut h = self.clone();
        h.header_crc32 = CRC_PLACEHOLDER.to_owned();
        let mut bytes = serde_json::to_vec(&h).expect("header serializes");
        let crc = crc32fast::hash(&bytes);
        // ...,"header_crc32":"00000000"}
        let at = bytes.len() - 2 - CRC_PLACEHOLDER.len();
        bytes[at..at + CRC_PLACEHOLDER.len()].copy_from_slice(format!("{crc:08x}").as_bytes());
        bytes
    }

    fn from_json(bytes: &[u8]) -> Result<Self> {
        let header: PackHeader =
            serde_json::from_slice(bytes).map_err(|e| Error::format(format!("header JSON: {e}")))?;
        let crc = &header.header_crc32;
        if crc.len() != 8 || !crc.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(Error::format("header_crc32 is not 8 lowercase hex digits"));
        }
        let mut needle = CRC_KEY.to_vec();
        needle.extend_from_slice(crc.as_bytes());
        needle.push(b'"');
        let at = bytes
            .windows(needle.len())
            .rposition(|w| w == needle.as_slice())
            .ok_or_else(|| Error::format("header_crc32 not found in header"))?
            + CRC_KEY.len();
        let mut zeroed = bytes.to_vec();
        zeroed[at..at + 8].copy_from_slice(CRC_PLACEHOLDER.as_bytes());
        let actual = format!("{:08x}", crc32fast::hash(&zeroed));
        if actual != *crc {
            return Err(Error::format(format!("header checksum {crc} != computed {actual}")));
        }
        Ok(header)
    }

    fn token_count(&self) -> Result<usize> {
        let total = self
            .sampled_count
            .checked_add(self.thumbnail_count)
            .ok_or_else(|| Error::format("token counts overflow"))?;
        if total != self.total_count {
            return Err(Error::format(format!(
                "total_count {} != sampled {} + thumbnail {}",
                self.total_count, self.sampled_count, self.thumbnail_count
            )));
        }
        to_usize(total)
    }

    /// Payload bytes implied by the header.
    pub fn payload_len(&self) -> Result<usize> {
        let tokens = self.token_count()?;
        let per_token = to_usize(self.dim)?
            .checked_mul(4)
            .and_then(|b| b.checked_add(if self.provenance_included { 12 } else { 0 }))
            .ok_or_else(|| Error::format("dim overflows"))?;
        tokens.checked_mul(per_token).ok_or_else(|| Error::format("payload length overflows"))
    }
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in memory")))
}

/// Serializes a pack into its exact byte form.
pub fn encode_pack(pack: &TokenPack) -> Vec<u8> {
    let header = PackHeader::for_pack(pack);
    let json = header.to_json();
    let tensors = pack.tensors_in_order();
    let mut out = Vec::with_capacity(12 + json.len() + header.payload_len().unwrap_or(0));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &tensors {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if header.provenance_included {
        for p in tensors.iter().flat_map(|t| t.provenance().unwrap_or_default()) {
            out.extend_from_slice(&p.frame_index.to_le_bytes());
            out.extend_from_slice(&p.patch_row.to_le_bytes());
            out.extend_from_slice(&p.patch_col.to_le_bytes());
        }
    }
    out
}

/// Writes a pack and flushes; returns bytes written.
pub fn write_pack<W: Write>(pack: &TokenPack, dest: &mut W) -> Result<u64> {
    let bytes = encode_pack(pack);
    dest.write_all(&bytes)?;
    dest.flush()?;
    Ok(bytes.len() as u64)
}

/// Writes to a temporary file next to `path` and renames it into place, so
/// a failed write never leaves a partial pack behind.
pub fn write_pack_file(pack: &TokenPack, path: &Path) -> Result<u64> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    // same mode a plain create would give, after umask
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o666));
    let mut tmp = builder.tempfile_in(dir)?;
    let n = write_pack(pack, tmp.as_file_mut())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::IoError(e.error))?;
    Ok(n)
}

/// Writes the header JSON to `<path>.json` (extension replaced).
pub fn write_manifest(pack: &TokenPack, path: &Path) -> Result<()> {
    fs::write(path.with_extension("json"), PackHeader::for_pack(pack).to_json())?;
    Ok(())
}

fn read_exact_or_format<R: Read>(src: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::format(format!("truncated {what}")),
        _ => Error::IoError(e),
    })
}

/// Reads and validates only the fixed prefix and JSON header.
pub fn read_header<R: Read>(src: &mut R) -> Result<PackHeader> {
    let mut fixed = [0u8; 12];
    read_exact_or_format(src, &mut fixed, "fixed header")?;
    let magic: [u8; 4] = fixed[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let len = u32::from_le_bytes(fixed[8..12].try_into().unwrap());
    if len > MAX_HEADER_LEN {
        return Err(Error::format(format!("header length {len} exceeds {MAX_HEADER_LEN}")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or_format(src, &mut json, "header JSON")?;
    let header = PackHeader::from_json(&json)?;
    header.payload_len()?;
    Ok(header)
}

/// Reads a pack, checking every header field against the payload.
pub fn read_pack<R: Read>(src: &mut R) -> Result<TokenPack> {
    let header = read_header(src)?;
    let expected = header.payload_len()?;
    let mut payload = Vec::new();
    // bounded by the bytes actually present, not by what the header claims
    src.take(expected as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::format(if payload.len() < expected {
            format!("payload has {} bytes, header implies {expected}", payload.len())
        } else {
            "trailing bytes after payload".to_owned()
        }));
    }
    decode_payload(&header, &payload)
}

/// [`read_pack`] over an in-memory buffer.
pub fn decode_pack(bytes: &[u8]) -> Result<TokenPack> {
    read_pack(&mut &bytes[..])
}

pub fn read_pack_file(path: &Path) -> Result<TokenPack> {
    let file = fs::File::open(path)?;
    read_pack(&mut io::BufReader::new(file))
}

fn decode_payload(header: &PackHeader, payload: &[u8]) -> Result<TokenPack> {
    let dim = to_usize(header.dim)?;
    let sampled_count = to_usize(header.sampled_count)?;
    let thumbnail_count = to_usize(header.thumbnail_count)?;
    let n_thumbnails = to_usize(header.n_thumbnails)?;
    let total = sampled_count + thumbnail_count;
    let per_thumb = match (n_thumbnails, thumbnail_count) {
        (0, 0) => 0,
        (0, _) => return Err(Error::format("thumbnail tokens present but n_thumbnails = 0")),
        (k, c) if c % k == 0 => c / k,
        (k, c) => return Err(Error::format(format!("{c} thumbnail tokens do not split into {k} images"))),
    };

    let (value_bytes, prov_bytes) = payload.split_at(total * dim * 4);
    let values: Vec<f32> = value_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let provenance: Option<Vec<Provenance>> = header.provenance_included.then(|| {
        prov_bytes
            .chunks_exact(12)
            .map(|c| {
                let u = |i: usize| u32::from_le_bytes(c[i..i + 4].try_into().unwrap());
                Provenance::new(u(0), u(4), u(8))
            })
            .collect()
    });

    // token ranges in pack order
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<TokenTensor> {
        let start = cursor;
        cursor += n;
        let vals = values[start * dim..cursor * dim].to_vec();
        let prov = provenance.as_ref().map(|p| p[start..cursor].to_vec());
        TokenTensor::new(n, dim, vals, prov)
    };
    let (sampled, thumbnails) = match header.ordering {
        Ordering::SamplingFirst => {
            let s = take(sampled_count)?;
            let t = (0..n_thumbnails).map(|_| take(per_thumb)).collect::<Result<Vec<_>>>()?;
            (s, t)
        }
        Ordering::ThumbnailFirst => {
            let t = (0..n_thumbnails).map(|_| take(per_thumb)).collect::<Result<Vec<_>>>()?;
            (take(sampled_count)?, t)
        }
    };
    let meta = PackMeta {
        strategy: header.strategy,
        n_frames: to_usize(header.n_frames)?,
        n_thumb_frames: to_usize(header.n_thumb_frames)?,
        n_thumbnails,
        tokens_per_image: to_usize(header.tokens_per_image)?,
        source_label: header.source_label.clone(),
    };
    TokenPack::new(sampled, thumbnails, header.ordering, meta)
}

/// Packs per-frame feature tensors into a feature file.
pub fn encode_features(tensors: &[TokenTensor], source_label: &str) -> Result<Vec<u8>> {
    let first = tensors.first().ok_or(Error::EmptyInput)?;
    let v = first.num_tokens();
    if let Some(t) = tensors.iter().find(|t| t.num_tokens() != v) {
        return Err(Error::ShapeMismatch(format!("feature tensors have {} and {} tokens", v, t.num_tokens())));
    }
    let all = crate::compress::concat_tokens(tensors)?;
    let meta = PackMeta {
        strategy: StrategyKind::Concat,
        n_frames: tensors.len(),
        n_thumb_frames: 0,
        n_thumbnails: 0,
        tokens_per_image: v,
        source_label: source_label.to_owned(),
    };
    Ok(encode_pack(&TokenPack::new(all, Vec::new(), Ordering::SamplingFirst, meta)?))
}

/// Reads per-frame tensors back from a feature file.
pub fn read_features<R: Read>(src: &mut R) -> Result<Vec<TokenTensor>> {
    let pack = read_pack(src)?;
    let meta = pack.meta();
    if !pack.thumbnails().is_empty() {
        return Err(Error::format("feature file must not contain thumbnail tokens"));
    }
    let v = meta.tokens_per_image;
    if v == 0 || meta.n_frames.checked_mul(v) != Some(pack.sampled_count()) {
        return Err(Error::format(format!(
            "{} tokens are not {} frames of {} tokens",
            pack.sampled_count(),
            meta.n_frames,
            v
        )));
    }
    let sampled = pack.sampled();
    let dim = sampled.dim();
    (0..meta.n_frames)
        .map(|f| {
            let vals = sampled.values()[f * v * dim..(f + 1) * v * dim].to_vec();
            let prov = sampled.provenance().map(|p| p[f * v..(f + 1) * v].to_vec());
            TokenTensor::new(v, dim, vals, prov)
        })
        .collect()
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<TokenTensor>> {
    read_features(&mut &bytes[..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(n: usize, dim: usize, base: f32, frame: u32) -> TokenTensor {
        let vals = (0..n * dim).map(|i| base + i as f32).collect();
        let prov = (0..n).map(|i| Provenance::new(frame, i as u32, 0)).collect();
        TokenTensor::new(n, dim, vals, Some(prov)).unwrap()
    }

    fn small_pack(ordering: Ordering) -> TokenPack {
        let meta = PackMeta {
            strategy: StrategyKind::ThumbnailAndSampling,
            n_frames: 3,
            n_thumb_frames: 2,
            n_thumbnails: 1,
            tokens_per_image: 2,
            source_label: "unit".into(),
        };
        TokenPack::new(tensor(4, 2, 0.0, 0), vec![tensor(2, 2, 100.0, 9)], ordering, meta).unwrap()
    }

    #[test]
    fn payload_size_for_six_tokens() {
        let pack = small_pack(Ordering::SamplingFirst);
        let no_prov = TokenPack::new(
            pack.sampled().clone().without_provenance(),
            vec![pack.thumbnails()[0].clone().without_provenance()],
            pack.ordering(),
            pack.meta().clone(),
        )
        .unwrap();
        let bytes = encode_pack(&no_prov);
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 12 - hlen, 48);
        let h = read_header(&mut &bytes[..]).unwrap();
        assert!(!h.provenance_included);
        assert_eq!((h.sampled_count, h.thumbnail_count, h.total_count), (4, 2, 6));

        let with_prov = encode_pack(&pack);
        let hlen = u32::from_le_bytes(with_prov[8..12].try_into().unwrap()) as usize;
        assert_eq!(with_prov.len() - 12 - hlen, 48 + 6 * 12);
    }

    #[test]
    fn layout_is_byte_exact() {
        let pack = small_pack(Ordering::ThumbnailFirst);
        let bytes = encode_pack(&pack);
        assert_eq!(&bytes[0..4], b"TSTK");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
        assert_eq!(json["ordering"], "thumbnail_first");
        assert_eq!(json["strategy"], "thumbnail_and_sampling");
        let payload = &bytes[12 + hlen..];
        // thumbnail tokens come first
        assert_eq!(&payload[0..4], &100.0f32.to_le_bytes());
        assert_eq!(&payload[2 * 2 * 4..2 * 2 * 4 + 4], &0.0f32.to_le_bytes());
        // provenance block: first token from frame 9
        let prov = &payload[6 * 2 * 4..];
        assert_eq!(&prov[0..4], &9u32.to_le_bytes());
    }

    #[test]
    fn round_trip_both_orderings() {
        for ordering in [Ordering::SamplingFirst, Ordering::ThumbnailFirst] {
            let pack = small_pack(ordering);
            let bytes = encode_pack(&pack);
            let back = decode_pack(&bytes).unwrap();
            assert_eq!(back, pack);
            assert_eq!(encode_pack(&back), bytes);
        }
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let bytes = encode_pack(&small_pack(Ordering::SamplingFirst));
        let mut b = bytes.clone();
        b[0] ^= 0xff;
        assert_eq!(decode_pack(&b).unwrap_err().name(), "BadMagic");
        let mut b = bytes.clone();
        b[4] = 2;
        assert_eq!(decode_pack(&b).unwrap_err().name(), "UnsupportedVersion");
        assert_eq!(decode_pack(&bytes[..bytes.len() - 1]).unwrap_err().name(), "FormatError");
        let mut b = bytes.clone();
        b.push(0);
        assert_eq!(decode_pack(&b).unwrap_err().name(), "FormatError");
        assert_eq!(decode_pack(&[]).unwrap_err().name(), "FormatError");
    }

    #[test]
    fn label_corruption_is_caught_by_checksum() {
        let bytes = encode_pack(&small_pack(Ordering::SamplingFirst));
        let at = bytes.windows(4).position(|w| w == b"unit").unwrap();
        let mut b = bytes.clone();
        b[at] = b'U';
        assert!(decode_pack(&b).unwrap_err().to_string().contains("checksum"));
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let pack = small_pack(Ordering::SamplingFirst);
        let mut h = PackHeader::for_pack(&pack);
        h.header_crc32 = CRC_PLACEHOLDER.into();
        let mut json = serde_json::to_vec(&h).unwrap();
        // prepend a key the reader does not know
        json.splice(1..1, b"\"future_field\":[1,2],".iter().copied());
        let crc = crc32fast::hash(&json);
        let at = json.len() - 10;
        json[at..at + 8].copy_from_slice(format!("{crc:08x}").as_bytes());
        let canonical = encode_pack(&pack);
        let old_len = u32::from_le_bytes(canonical[8..12].try_into().unwrap()) as usize;
        let mut bytes = canonical[..8].to_vec();
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        bytes.extend_from_slice(&canonical[12 + old_len..]);
        assert_eq!(decode_pack(&bytes).unwrap(), pack);
    }

    #[test]
    fn features_round_trip() {
        let tensors: Vec<TokenTensor> = (0..5).map(|f| tensor(4, 3, f as f32 * 10.0, f)).collect();
        let bytes = encode_features(&tensors, "feat").unwrap();
        assert_eq!(decode_features(&bytes).unwrap(), tensors);
    }

    #[test]
    fn features_reject_packs_with_thumbnails() {
        let bytes = encode_pack(&small_pack(Ordering::SamplingFirst));
        assert_eq!(decode_features(&bytes).unwrap_err().name(), "FormatError");
        assert_eq!(encode_features(&[], "x").unwrap_err().name(), "EmptyInput");
    }
}
