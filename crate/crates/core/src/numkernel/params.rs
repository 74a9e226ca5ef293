use super::matrix::Real;

/// A collection of parameter tensors that can be visited in a fixed order.
///
/// The optimizer and the gradient checker rely on `tensors` and
/// `tensors_mut` yielding the same tensors in the same order.
pub trait ParamSet<T: Real> {
    fn tensors(&self) -> Vec<&[T]>;

    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn tensor_names(&self) -> Vec<String> {
        (0..self.tensors().len()).map(|i| format!("tensor{i}")).collect()
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn tensor_shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    /// Sets every entry to zero.
    fn zero_fill(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}
