use serde_json::{Map, Value};

use super::{check_probabilities, Model};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::protocol::{as_f64_vec, as_shape, as_usize, field, ProcessPool, ProcessSpec};

/// A model served by child processes over the model wire protocol.
#[derive(Debug)]
pub struct ExternalModel {
    pool: ProcessPool,
    num_classes: usize,
    input_shape: Shape,
}

impl ExternalModel {
    pub fn spawn(spec: &ProcessSpec) -> Result<Self> {
        let pool = ProcessPool::spawn(spec, "model")?;
        let hello = pool.hello();
        let num_classes = as_usize(hello.get("num_classes"), "num_classes")?;
        if num_classes == 0 {
            return Err(Error::protocol(None, "handshake declares zero classes"));
        }
        let input_shape = as_shape(hello.get("input_shape"))?;
        Ok(ExternalModel {
            pool,
            num_classes,
            input_shape,
        })
    }
}

pub fn external_model(spec: &ProcessSpec) -> Result<ExternalModel> {
    ExternalModel::spawn(spec)
}

impl Model for ExternalModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn input_shape(&self) -> Option<Shape> {
        Some(self.input_shape)
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        for img in images {
            img.ensure_shape(self.input_shape)?;
        }
        let batch: Vec<Value> = images.iter().map(|img| Value::from(img.data().to_vec())).collect();
        let mut fields = Map::new();
        fields.insert("images".into(), Value::Array(batch));
        let reply = self.pool.request("predict", fields)?;
        let id = reply.get("id").and_then(Value::as_u64);
        let rows = field(&reply, "probs")?
            .as_array()
            .ok_or_else(|| Error::protocol(id, "probs is not an array"))?;
        if rows.len() != images.len() {
            return Err(Error::protocol(
                id,
                format!("{} probability rows for {} images", rows.len(), images.len()),
            ));
        }
        rows.iter()
            .map(|row| {
                let probs = as_f64_vec(row, id, "probs row")?;
                check_probabilities(&probs, self.num_classes)?;
                Ok(probs)
            })
            .collect()
    }
}
