//! The `UDTF` binary tensor container.
//!
//! Layout: magic `UDTF`, version byte `1`, dtype byte, rank byte, `rank`
//! little-endian `u32` dims, then the row-major payload in little endian.

use super::FormatError;
use crate::superpixel::SuperpixelMap;
use crate::types::{FeatureMap, PanopticLabel};

pub const MAGIC: [u8; 4] = *b"UDTF";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    U8 = 2,
    U32 = 3,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            1 => Ok(Self::F32),
            2 => Ok(Self::U8),
            3 => Ok(Self::U32),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::F32 | Self::U32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            Self::F32(_) => Dtype::F32,
            Self::U8(_) => Dtype::U8,
            Self::U32(_) => Dtype::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::U8(v) => v.len(),
            Self::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: Vec<u32>,
    data: TensorData,
}

fn element_count(dims: &[u32]) -> Result<usize, FormatError> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or(FormatError::SizeOverflow)
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self, FormatError> {
        if dims.len() > u8::MAX as usize {
            return Err(FormatError::RankTooLarge(dims.len()));
        }
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(FormatError::ElementCount {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + dtype.size() * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(dtype.code());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::TruncatedHeader);
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        if bytes.len() < 7 {
            return Err(FormatError::TruncatedHeader);
        }
        if bytes[4] != VERSION {
            return Err(FormatError::UnsupportedVersion(bytes[4]));
        }
        let dtype = Dtype::from_code(bytes[5])?;
        let rank = bytes[6] as usize;
        let header = 7 + 4 * rank;
        if bytes.len() < header {
            return Err(FormatError::TruncatedHeader);
        }
        let dims: Vec<u32> = bytes[7..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        let count = element_count(&dims)?;
        let need = count.checked_mul(dtype.size()).ok_or(FormatError::SizeOverflow)?;
        let payload = &bytes[header..];
        if payload.len() < need {
            return Err(FormatError::TruncatedPayload {
                expected: need,
                actual: payload.len(),
            });
        }
        if payload.len() > need {
            return Err(FormatError::TrailingBytes(payload.len() - need));
        }
        let words = || payload.chunks_exact(4).map(|c| c.try_into().expect("chunk of 4"));
        let data = match dtype {
            Dtype::F32 => TensorData::F32(words().map(f32::from_le_bytes).collect()),
            Dtype::U8 => TensorData::U8(payload.to_vec()),
            Dtype::U32 => TensorData::U32(words().map(u32::from_le_bytes).collect()),
        };
        Ok(Self { dims, data })
    }

    fn expect(&self, dtype: Dtype, rank: usize) -> Result<(), FormatError> {
        if self.dtype() != dtype {
            return Err(FormatError::DtypeMismatch {
                expected: dtype,
                actual: self.dtype(),
            });
        }
        if self.dims.len() != rank {
            return Err(FormatError::RankMismatch {
                expected: rank,
                actual: self.dims.len(),
            });
        }
        Ok(())
    }

    fn dim_u32(n: usize) -> Result<u32, FormatError> {
        u32::try_from(n).map_err(|_| FormatError::SizeOverflow)
    }
}

impl TryFrom<&FeatureMap> for TensorFile {
    type Error = FormatError;

    fn try_from(f: &FeatureMap) -> Result<Self, FormatError> {
        let dims = vec![
            Self::dim_u32(f.channels())?,
            Self::dim_u32(f.height())?,
            Self::dim_u32(f.width())?,
        ];
        Self::new(dims, TensorData::F32(f.values().to_vec()))
    }
}

impl TryFrom<&TensorFile> for FeatureMap {
    type Error = FormatError;

    fn try_from(t: &TensorFile) -> Result<Self, FormatError> {
        t.expect(Dtype::F32, 3)?;
        let TensorData::F32(v) = &t.data else { unreachable!() };
        let d = &t.dims;
        FeatureMap::new(d[0] as usize, d[1] as usize, d[2] as usize, v.clone())
            .map_err(FormatError::Content)
    }
}

impl TryFrom<&PanopticLabel> for TensorFile {
    type Error = FormatError;

    fn try_from(l: &PanopticLabel) -> Result<Self, FormatError> {
        let mut v = l.category_plane().to_vec();
        v.extend_from_slice(l.instance_plane());
        Self::new(
            vec![2, Self::dim_u32(l.height())?, Self::dim_u32(l.width())?],
            TensorData::U32(v),
        )
    }
}

impl TryFrom<&TensorFile> for PanopticLabel {
    type Error = FormatError;

    fn try_from(t: &TensorFile) -> Result<Self, FormatError> {
        t.expect(Dtype::U32, 3)?;
        if t.dims[0] != 2 {
            return Err(FormatError::Invalid(format!(
                "label tensor needs 2 planes, found {}",
                t.dims[0]
            )));
        }
        let TensorData::U32(v) = &t.data else { unreachable!() };
        let (h, w) = (t.dims[1] as usize, t.dims[2] as usize);
        let n = h * w;
        PanopticLabel::from_planes(h, w, v[..n].to_vec(), v[n..].to_vec()).map_err(FormatError::Content)
    }
}

impl TryFrom<&SuperpixelMap> for TensorFile {
    type Error = FormatError;

    fn try_from(sp: &SuperpixelMap) -> Result<Self, FormatError> {
        Self::new(
            vec![Self::dim_u32(sp.height())?, Self::dim_u32(sp.width())?],
            TensorData::U32(sp.labels().to_vec()),
        )
    }
}

impl TryFrom<&TensorFile> for SuperpixelMap {
    type Error = FormatError;

    fn try_from(t: &TensorFile) -> Result<Self, FormatError> {
        t.expect(Dtype::U32, 2)?;
        let TensorData::U32(v) = &t.data else { unreachable!() };
        SuperpixelMap::from_labels(t.dims[0] as usize, t.dims[1] as usize, v.clone())
            .map_err(FormatError::Content)
    }
}
