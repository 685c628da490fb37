#pragma once

// Checkpoints: parameters with both Adam moments, the step count, and model metadata, all in
// one APST container.

#include <string>
#include <vector>

#include "apsusct/aps_fwi.hpp"
#include "apsusct/aps_wave.hpp"
#include "apsusct/io/container.hpp"
#include "apsusct/nn/param_store.hpp"

namespace apsusct::pipeline {

template <class T>
void append_params(const nn::ParamStore<T>& store, std::vector<io::Section>& out) {
  for (const auto& [name, p] : store.entries()) {
    out.push_back(io::tensor_section("param/" + name, p.value));
    out.push_back(io::tensor_section("adam_m/" + name, p.m));
    out.push_back(io::tensor_section("adam_v/" + name, p.v));
  }
  out.push_back(io::scalar_section("meta/step_count", static_cast<double>(store.step_count())));
}

/// Overwrites every parameter of `store` (which must already hold the expected names and shapes).
template <class T>
void restore_params(const std::vector<io::Section>& sections, nn::ParamStore<T>& store) {
  for (auto& [name, p] : store.entries()) {
    auto load = [&](const std::string& key, Tensor4<T>& dst) {
      Tensor4<T> t = io::section_tensor<T>(io::find_section(sections, key));
      if (!(t.shape() == dst.shape())) {
        throw DataError("checkpoint '" + key + "' has shape " + t.shape().str() + ", model expects " + dst.shape().str());
      }
      dst = std::move(t);
    };
    load("param/" + name, p.value);
    load("adam_m/" + name, p.m);
    load("adam_v/" + name, p.v);
  }
  std::size_t stored = 0;
  for (const auto& s : sections) stored += s.name.rfind("param/", 0) == 0 ? 1 : 0;
  if (stored != store.entries().size()) {
    throw DataError("checkpoint holds " + std::to_string(stored) + " parameters, model has " +
                    std::to_string(store.entries().size()));
  }
  store.set_step_count(static_cast<std::uint64_t>(io::find_section(sections, "meta/step_count").values.at(0)));
}

inline double meta_scalar(const std::vector<io::Section>& s, const std::string& name) {
  return io::find_section(s, "meta/" + name).values.at(0);
}

inline std::vector<double> meta_vector(const std::vector<io::Section>& s, const std::string& name) {
  return io::find_section(s, "meta/" + name).values;
}

inline io::Section meta_vector_section(const std::string& name, std::vector<double> v) {
  const auto n = static_cast<std::uint32_t>(v.size());
  return io::make_section("meta/" + name, io::DType::f64, {n}, std::move(v));
}

template <class T>
void save_upscaler(const std::string& path, const UpscalerModel<T>& m, std::size_t base_channels) {
  std::vector<io::Section> s;
  s.push_back(meta_vector_section("density", {static_cast<double>(m.sparse_sources),
                                              static_cast<double>(m.sparse_receivers),
                                              static_cast<double>(m.dense_sources),
                                              static_cast<double>(m.dense_receivers), static_cast<double>(m.time)}));
  s.push_back(io::scalar_section("meta/norm_scale", m.norm_scale));
  s.push_back(io::scalar_section("meta/base_channels", static_cast<double>(base_channels)));
  s.push_back(meta_vector_section("loss_history", m.loss_history));
  append_params(m.params, s);
  io::write_container(path, s);
}

template <class T>
UpscalerModel<T> load_upscaler(const std::string& path) {
  const auto s = io::read_container(path);
  const auto d = meta_vector(s, "density");
  if (d.size() != 5) throw DataError(path + ": meta/density must hold 5 values");
  UpscalerModel<T> m;
  m.sparse_sources = static_cast<std::size_t>(d[0]);
  m.sparse_receivers = static_cast<std::size_t>(d[1]);
  m.dense_sources = static_cast<std::size_t>(d[2]);
  m.dense_receivers = static_cast<std::size_t>(d[3]);
  m.time = static_cast<std::size_t>(d[4]);
  m.norm_scale = meta_scalar(s, "norm_scale");
  m.loss_history = meta_vector(s, "loss_history");
  const auto base = static_cast<std::size_t>(meta_scalar(s, "base_channels"));
  Rng unused(0);
  if (m.receivers_upscaled() || !m.sources_upscaled()) {
    m.receiver_net = UpscalerSpec::make(m.dense_receivers, m.time, base);
    init_upscaler(*m.receiver_net, "recv", m.params, unused, true);
  }
  if (m.sources_upscaled()) {
    m.source_net = UpscalerSpec::make(m.dense_sources, m.time, base);
    init_upscaler(*m.source_net, "src", m.params, unused, true);
  }
  restore_params(s, m.params);
  return m;
}

template <class T>
void save_fwi(const std::string& path, const FwiModel<T>& m) {
  const auto& n = m.net;
  std::vector<io::Section> s;
  s.push_back(meta_vector_section("encoding", {static_cast<double>(m.encoding.input_sources),
                                               static_cast<double>(m.encoding.encoded_channels),
                                               m.encoding.random_mask ? 1.0 : 0.0}));
  s.push_back(meta_vector_section(
      "net", {static_cast<double>(n.receivers), static_cast<double>(n.time), static_cast<double>(n.map_n),
              static_cast<double>(n.in_channels), static_cast<double>(n.base_channels), n.se_enabled ? 1.0 : 0.0,
              static_cast<double>(n.se_reduction), n.c_min, n.c_max}));
  s.push_back(io::scalar_section("meta/norm_scale", m.norm_scale));
  s.push_back(meta_vector_section("loss_history", m.loss_history));
  append_params(m.params, s);
  io::write_container(path, s);
}

template <class T>
FwiModel<T> load_fwi(const std::string& path) {
  const auto s = io::read_container(path);
  const auto e = meta_vector(s, "encoding");
  const auto n = meta_vector(s, "net");
  if (e.size() != 3 || n.size() != 9) throw DataError(path + ": malformed FWI metadata");
  auto z = [](double v) { return static_cast<std::size_t>(v); };
  FwiModel<T> m;
  m.encoding = {z(e[0]), z(e[1]), e[2] != 0.0};
  m.net = InversionNetSpec::make(z(n[0]), z(n[1]), z(n[2]), z(n[3]), z(n[4]), n[5] != 0.0, n[7], n[8], z(n[6]));
  m.norm_scale = meta_scalar(s, "norm_scale");
  m.loss_history = meta_vector(s, "loss_history");
  Rng unused(0);
  init_inversion_net(m.encoding, m.net, m.params, unused);
  restore_params(s, m.params);
  return m;
}

}  // namespace apsusct::pipeline
