use std::sync::Arc;

use serde_json::{Map, Value};

use super::{Codec, FeatureGrouping, FeatureKind, LatentVector, Scalar};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::protocol::{as_f64_vec, as_shape, as_usize, field, ProcessPool, ProcessSpec};

/// A codec served by child processes over the codec wire protocol.
#[derive(Debug)]
pub struct ExternalCodec {
    pool: ProcessPool,
    shape: Shape,
    grouping: Arc<FeatureGrouping>,
}

impl ExternalCodec {
    pub fn spawn(spec: &ProcessSpec) -> Result<Self> {
        let pool = ProcessPool::spawn(spec, "codec")?;
        let hello = pool.hello().clone();
        let shape = as_shape(hello.get("input_shape"))?;
        let num_scalars = as_usize(hello.get("num_scalars"), "num_scalars")?;
        let num_features = as_usize(hello.get("num_features"), "num_features")?;
        let assignment: Vec<usize> = hello
            .get("scalar_assignment")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::protocol(None, "handshake scalar_assignment missing"))?
            .iter()
            .map(|v| as_usize(Some(v), "scalar_assignment"))
            .collect::<Result<_>>()?;
        let names: Vec<String> = hello
            .get("feature_names")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::protocol(None, "handshake feature_names missing"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::protocol(None, "feature_names must be strings"))
            })
            .collect::<Result<_>>()?;
        if assignment.len() != num_scalars || names.len() != num_features {
            return Err(Error::protocol(
                None,
                format!(
                    "handshake declares {num_scalars} scalars / {num_features} features but lists {} / {}",
                    assignment.len(),
                    names.len()
                ),
            ));
        }
        let grouping = FeatureGrouping::new(assignment, names, FeatureKind::External)
            .map_err(|e| Error::protocol(None, format!("invalid grouping in handshake: {e}")))?;
        Ok(ExternalCodec {
            pool,
            shape,
            grouping: Arc::new(grouping),
        })
    }
}

pub fn external_codec(spec: &ProcessSpec) -> Result<ExternalCodec> {
    ExternalCodec::spawn(spec)
}

impl Codec for ExternalCodec {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn grouping(&self) -> &Arc<FeatureGrouping> {
        &self.grouping
    }

    fn encode(&self, image: &Image) -> Result<LatentVector> {
        image.ensure_shape(self.shape)?;
        let mut fields = Map::new();
        fields.insert("image".into(), Value::from(image.data().to_vec()));
        let reply = self.pool.request("encode", fields)?;
        let id = reply.get("id").and_then(Value::as_u64);
        let pairs = field(&reply, "scalars")?
            .as_array()
            .ok_or_else(|| Error::protocol(id, "scalars is not an array"))?;
        let scalars = pairs
            .iter()
            .map(|p| match as_f64_vec(p, id, "scalar")?.as_slice() {
                [re, im] => Ok(Scalar::new(*re, *im)),
                _ => Err(Error::protocol(id, "scalar must be [re, im]")),
            })
            .collect::<Result<Vec<_>>>()?;
        if scalars.len() != self.grouping.num_scalars() {
            return Err(Error::protocol(
                id,
                format!(
                    "{} scalars returned, handshake declared {}",
                    scalars.len(),
                    self.grouping.num_scalars()
                ),
            ));
        }
        LatentVector::new(scalars, self.grouping.clone())
    }

    fn decode(&self, latent: &LatentVector) -> Result<Image> {
        self.check_latent(latent)?;
        let pairs: Vec<Value> = latent.scalars().iter().map(|s| Value::from(vec![s.re, s.im])).collect();
        let mut fields = Map::new();
        fields.insert("scalars".into(), Value::Array(pairs));
        let reply = self.pool.request("decode", fields)?;
        let id = reply.get("id").and_then(Value::as_u64);
        let data = as_f64_vec(field(&reply, "image")?, id, "image")?;
        if data.len() != self.shape.len() {
            return Err(Error::protocol(
                id,
                format!("decoded image has {} values, expected {}", data.len(), self.shape.len()),
            ));
        }
        Image::new(self.shape, data)
    }
}
