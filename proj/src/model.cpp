#include "nsfold/model.hpp"

#include "nsfold/error.hpp"

namespace nsfold {

Model::Model(const Model& other) : input_shape_(other.input_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Layer& Model::add(std::unique_ptr<Layer> layer) {
  if (!input_shape_.empty()) layer->output_shape(output_shape());
  layer->set_input_grad_required(!layers_.empty());
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

Shape Model::output_shape() const {
  Shape shape = input_shape_;
  for (const auto& layer : layers_) shape = layer->output_shape(shape);
  return shape;
}

Tensor Model::forward(const Tensor& x, Phase phase) {
  Tensor activation = x;
  for (auto& layer : layers_) activation = layer->forward_owned(std::move(activation), phase);
  return activation;
}

Tensor Model::backward(const Tensor& grad_output) {
  Tensor grad = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward_owned(std::move(grad));
  return grad;
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> all;
  for (auto& layer : layers_)
    for (Parameter* p : layer->parameters()) all.push_back(p);
  return all;
}

std::vector<Parameter*> Model::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t Model::trainable_parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_)
    for (const Parameter* p : layer->parameters())
      if (p->trainable) count += p->value.numel();
  return count;
}

std::uint64_t Model::kink_signature() const {
  std::uint64_t h = 0;
  for (const auto& layer : layers_) {
    const std::uint64_t s = layer->kink_signature();
    h = hash_bytes(&s, sizeof s, h);
  }
  return h;
}

}  // namespace nsfold
