#pragma once

// Pre-trained model artifacts: linear models, tree ensembles, and small
// dense MLPs, with an optional input transform chain (standard scaling,
// one-hot expansion). Artifacts load from and save to a canonical JSON
// document; evaluation is pure and side-effect free.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apx/common.hpp"

namespace apx {

enum class Task : std::uint8_t { Regression, Classification };

inline Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::Regression;
  if (s == "classification") return Task::Classification;
  fail("unknown task: '" + s + "'");
}

inline const char* task_name(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

enum class ModelKind : std::uint8_t { Linear, TreeEnsemble, Mlp };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "tree_ensemble") return ModelKind::TreeEnsemble;
  if (s == "mlp") return ModelKind::Mlp;
  fail("unknown model kind: '" + s + "'");
}

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Linear: return "linear";
    case ModelKind::TreeEnsemble: return "tree_ensemble";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

// Result of one model evaluation. Regression fills value; classification
// fills class_index plus the raw per-class scores.
struct PredictionValue {
  Task task = Task::Regression;
  double value = 0.0;
  int class_index = 0;
  std::vector<double> scores;
};

enum class TransformKind : std::uint8_t { StandardScaler, OneHot };

struct Transform {
  TransformKind kind = TransformKind::StandardScaler;
  // StandardScaler: per-slot mean and positive scale.
  std::vector<double> mean;
  std::vector<double> scale;
  // OneHot: per-slot category lists; an empty list passes the slot through.
  std::vector<std::vector<double>> categories;

  std::size_t input_width() const {
    return kind == TransformKind::StandardScaler ? mean.size() : categories.size();
  }

  std::size_t output_width() const {
    if (kind == TransformKind::StandardScaler) return mean.size();
    std::size_t w = 0;
    for (const auto& cats : categories) w += cats.empty() ? 1 : cats.size();
    return w;
  }

  void apply(const std::vector<double>& in, std::vector<double>& out) const {
    if (kind == TransformKind::StandardScaler) {
      out.resize(in.size());
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = (in[i] - mean[i]) / scale[i];
      }
      return;
    }
    out.clear();
    out.reserve(output_width());
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (categories[i].empty()) {
        out.push_back(in[i]);
      } else {
        for (double cat : categories[i]) {
          out.push_back(in[i] == cat ? 1.0 : 0.0);
        }
      }
    }
  }
};

// Flattened binary decision tree. Internal nodes route x[feature] < threshold
// to `left`, else to `right`; leaves hold one score per model output.
struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf_offset = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<double> leaf_values;  // leaf count x out_width, row-major
};

enum class TreeCombine : std::uint8_t { Average, Sum };

struct TreeEnsembleBody {
  std::vector<Tree> trees;
  TreeCombine combine = TreeCombine::Average;
  double base_score = 0.0;
};

struct LinearBody {
  // Row-major out_width x in_width; regression uses a single row.
  std::vector<double> weights;
  std::vector<double> bias;
  std::size_t out_width = 1;
};

enum class Activation : std::uint8_t { Relu, Identity, Softmax };

struct MlpLayer {
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  Activation activation = Activation::Relu;
};

struct MlpBody {
  std::vector<MlpLayer> layers;
};

struct ModelArtifact {
  Task task = Task::Regression;
  ModelKind kind = ModelKind::Linear;
  std::size_t arity = 0;       // pre-transform input width
  std::size_t body_width = 0;  // post-transform width fed to the body
  std::size_t out_width = 1;   // 1 for regression, class count otherwise
  std::vector<Transform> transforms;
  LinearBody linear;
  TreeEnsembleBody ensemble;
  MlpBody mlp;
};

namespace detail {

struct EvalScratch {
  std::vector<double> cur;
  std::vector<double> next;
  std::vector<double> scores;
};

inline void apply_transforms(const ModelArtifact& m, const std::vector<double>& x,
                             EvalScratch& s) {
  s.cur = x;
  for (const Transform& t : m.transforms) {
    t.apply(s.cur, s.next);
    std::swap(s.cur, s.next);
  }
}

inline void eval_body(const ModelArtifact& m, EvalScratch& s) {
  const std::vector<double>& in = s.cur;
  std::vector<double>& scores = s.scores;
  scores.assign(m.out_width, 0.0);
  switch (m.kind) {
    case ModelKind::Linear: {
      for (std::size_t o = 0; o < m.out_width; ++o) {
        double acc = m.linear.bias[o];
        const double* w = m.linear.weights.data() + o * m.body_width;
        for (std::size_t i = 0; i < m.body_width; ++i) acc += w[i] * in[i];
        scores[o] = acc;
      }
      break;
    }
    case ModelKind::TreeEnsemble: {
      for (const Tree& tree : m.ensemble.trees) {
        std::int32_t node = 0;
        while (tree.nodes[node].feature >= 0) {
          const TreeNode& nd = tree.nodes[node];
          node = in[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left
                                                                         : nd.right;
        }
        const double* leaf =
            tree.leaf_values.data() + tree.nodes[node].leaf_offset * m.out_width;
        for (std::size_t o = 0; o < m.out_width; ++o) scores[o] += leaf[o];
      }
      if (m.ensemble.combine == TreeCombine::Average && !m.ensemble.trees.empty()) {
        const double inv = 1.0 / static_cast<double>(m.ensemble.trees.size());
        for (double& s2 : scores) s2 *= inv;
      }
      for (double& s2 : scores) s2 += m.ensemble.base_score;
      break;
    }
    case ModelKind::Mlp: {
      for (const MlpLayer& layer : m.mlp.layers) {
        s.next.assign(layer.out_width, 0.0);
        for (std::size_t o = 0; o < layer.out_width; ++o) {
          double acc = layer.bias[o];
          const double* w = layer.weights.data() + o * layer.in_width;
          for (std::size_t i = 0; i < layer.in_width; ++i) acc += w[i] * s.cur[i];
          s.next[o] = layer.activation == Activation::Relu && acc < 0.0 ? 0.0 : acc;
        }
        std::swap(s.cur, s.next);
      }
      // The softmax output stage is monotone, so raw scores are reported
      // and the class decision uses them directly.
      scores = s.cur;
      break;
    }
  }
}

inline PredictionValue finalize_prediction(const ModelArtifact& m, EvalScratch& s) {
  PredictionValue out;
  out.task = m.task;
  if (m.task == Task::Regression) {
    out.value = s.scores[0];
    return out;
  }
  out.scores = s.scores;
  out.class_index = static_cast<int>(std::max_element(s.scores.begin(), s.scores.end()) -
                                     s.scores.begin());
  out.value = static_cast<double>(out.class_index);
  return out;
}

inline void eval_into(const ModelArtifact& m, const std::vector<double>& x,
                      EvalScratch& s) {
  apply_transforms(m, x, s);
  eval_body(m, s);
}

}  // namespace detail

inline PredictionValue predict(const ModelArtifact& m, const std::vector<double>& x) {
  require(x.size() == m.arity, "predict: expected " + std::to_string(m.arity) +
                                   " inputs, got " + std::to_string(x.size()));
  detail::EvalScratch s;
  detail::eval_into(m, x, s);
  return detail::finalize_prediction(m, s);
}

// Batch evaluation, one row per prediction. Rows evaluate independently and
// may run concurrently; output order always matches input order.
inline std::vector<PredictionValue> predict_batch(const ModelArtifact& m,
                                                  const std::vector<std::vector<double>>& rows) {
  std::vector<PredictionValue> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    thread_local detail::EvalScratch s;
    require(rows[i].size() == m.arity,
            "predict_batch: row " + std::to_string(i) + " has " +
                std::to_string(rows[i].size()) + " inputs, expected " +
                std::to_string(m.arity));
    detail::eval_into(m, rows[i], s);
    out[i] = detail::finalize_prediction(m, s);
  });
  return out;
}

// ---------------------------------------------------------------------------
// JSON document load/save
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> parse_double_array(const nlohmann::json& j,
                                              const std::string& where) {
  require(j.is_array(), where + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    require(v.is_number(), where + ": expected numbers");
    out.push_back(v.get<double>());
    require(std::isfinite(out.back()), where + ": non-finite value");
  }
  return out;
}

inline void flatten_tree_node(const nlohmann::json& j, Tree& tree,
                              std::size_t out_width, const std::string& where) {
  const std::int32_t index = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("value")) {
    std::vector<double> v;
    if (j["value"].is_number()) {
      v.push_back(j["value"].get<double>());
    } else {
      v = parse_double_array(j["value"], where + ".value");
    }
    require(v.size() == out_width,
            where + ": leaf has " + std::to_string(v.size()) + " outputs, expected " +
                std::to_string(out_width));
    tree.nodes[index].leaf_offset =
        static_cast<std::int32_t>(tree.leaf_values.size() / out_width);
    tree.leaf_values.insert(tree.leaf_values.end(), v.begin(), v.end());
    return;
  }
  require(j.contains("feature") && j.contains("threshold") && j.contains("left") &&
              j.contains("right"),
          where + ": internal node needs feature/threshold/left/right");
  tree.nodes[index].feature = j["feature"].get<std::int32_t>();
  tree.nodes[index].threshold = j["threshold"].get<double>();
  require(std::isfinite(tree.nodes[index].threshold), where + ": non-finite threshold");
  tree.nodes[index].left = static_cast<std::int32_t>(tree.nodes.size());
  flatten_tree_node(j["left"], tree, out_width, where + ".left");
  tree.nodes[index].right = static_cast<std::int32_t>(tree.nodes.size());
  flatten_tree_node(j["right"], tree, out_width, where + ".right");
}

inline nlohmann::ordered_json tree_node_to_json(const Tree& tree, std::int32_t index,
                                                std::size_t out_width) {
  nlohmann::ordered_json j;
  const TreeNode& nd = tree.nodes[index];
  if (nd.feature < 0) {
    j["value"] = std::vector<double>(
        tree.leaf_values.begin() + nd.leaf_offset * out_width,
        tree.leaf_values.begin() + (nd.leaf_offset + 1) * out_width);
    return j;
  }
  j["feature"] = nd.feature;
  j["threshold"] = nd.threshold;
  j["left"] = tree_node_to_json(tree, nd.left, out_width);
  j["right"] = tree_node_to_json(tree, nd.right, out_width);
  return j;
}

inline std::size_t leaf_out_width(const nlohmann::json& node) {
  if (node.contains("value")) {
    return node["value"].is_number() ? 1 : node["value"].size();
  }
  return leaf_out_width(node["left"]);
}

}  // namespace detail

inline Transform transform_from_json(const nlohmann::json& tj) {
  Transform t;
  const std::string type = tj.at("type").get<std::string>();
  if (type == "standard_scaler") {
    t.kind = TransformKind::StandardScaler;
    t.mean = detail::parse_double_array(tj.at("mean"), "scaler mean");
    t.scale = detail::parse_double_array(tj.at("scale"), "scaler scale");
  } else if (type == "onehot") {
    t.kind = TransformKind::OneHot;
    require(tj.at("categories").is_array(), "onehot categories must be an array");
    for (const auto& cj : tj["categories"]) {
      t.categories.push_back(detail::parse_double_array(cj, "onehot categories"));
    }
  } else {
    fail("unknown transform type: '" + type + "'");
  }
  return t;
}

// Validates shapes and wiring; every failure names the offending piece.
inline void validate_model(const ModelArtifact& m) {
  require(m.arity >= 1, "model arity must be >= 1");
  std::size_t width = m.arity;
  for (std::size_t t = 0; t < m.transforms.size(); ++t) {
    const Transform& tr = m.transforms[t];
    require(tr.input_width() == width,
            "transform " + std::to_string(t) + ": input width " +
                std::to_string(tr.input_width()) + " does not match incoming width " +
                std::to_string(width));
    if (tr.kind == TransformKind::StandardScaler) {
      require(tr.mean.size() == tr.scale.size(),
              "transform " + std::to_string(t) + ": mean/scale size mismatch");
      for (std::size_t i = 0; i < tr.scale.size(); ++i) {
        require(tr.scale[i] > 0.0, "transform " + std::to_string(t) + ": scale[" +
                                       std::to_string(i) + "] must be positive");
      }
    } else {
      for (std::size_t i = 0; i < tr.categories.size(); ++i) {
        auto cats = tr.categories[i];
        std::sort(cats.begin(), cats.end());
        require(std::adjacent_find(cats.begin(), cats.end()) == cats.end(),
                "transform " + std::to_string(t) + ": duplicate category in slot " +
                    std::to_string(i));
      }
    }
    width = tr.output_width();
  }
  require(width == m.body_width, "transform chain produces width " +
                                     std::to_string(width) + ", body expects " +
                                     std::to_string(m.body_width));
  if (m.task == Task::Regression) {
    require(m.out_width == 1, "regression model must have one output");
  } else {
    require(m.out_width >= 2, "classification model needs at least two classes");
  }

  switch (m.kind) {
    case ModelKind::Linear:
      require(m.linear.weights.size() == m.out_width * m.body_width,
              "linear weights size " + std::to_string(m.linear.weights.size()) +
                  " != out_width * width = " + std::to_string(m.out_width * m.body_width));
      require(m.linear.bias.size() == m.out_width, "linear bias size mismatch");
      break;
    case ModelKind::TreeEnsemble: {
      require(!m.ensemble.trees.empty(), "tree ensemble has no trees");
      for (std::size_t t = 0; t < m.ensemble.trees.size(); ++t) {
        for (const TreeNode& nd : m.ensemble.trees[t].nodes) {
          if (nd.feature >= 0) {
            require(static_cast<std::size_t>(nd.feature) < m.body_width,
                    "tree " + std::to_string(t) + ": feature index " +
                        std::to_string(nd.feature) + " out of range (width " +
                        std::to_string(m.body_width) + ")");
          }
        }
      }
      break;
    }
    case ModelKind::Mlp: {
      require(!m.mlp.layers.empty(), "mlp has no layers");
      std::size_t in = m.body_width;
      for (std::size_t l = 0; l < m.mlp.layers.size(); ++l) {
        const MlpLayer& layer = m.mlp.layers[l];
        require(layer.in_width == in,
                "mlp layer " + std::to_string(l) + ": input width " +
                    std::to_string(layer.in_width) + " does not match incoming width " +
                    std::to_string(in));
        require(layer.weights.size() == layer.in_width * layer.out_width,
                "mlp layer " + std::to_string(l) + ": weights size mismatch");
        require(layer.bias.size() == layer.out_width,
                "mlp layer " + std::to_string(l) + ": bias size mismatch");
        const bool last = l + 1 == m.mlp.layers.size();
        if (last) {
          const Activation want =
              m.task == Task::Regression ? Activation::Identity : Activation::Softmax;
          require(layer.activation == want,
                  "mlp output layer activation must be " +
                      std::string(m.task == Task::Regression ? "identity" : "softmax"));
        } else {
          require(layer.activation == Activation::Relu,
                  "mlp hidden layer " + std::to_string(l) + " must use relu");
        }
        in = layer.out_width;
      }
      require(in == m.out_width, "mlp output width mismatch");
      break;
    }
  }
}

inline ModelArtifact model_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "model document must be a JSON object");
  for (const char* field : {"task", "kind", "arity", "body"}) {
    require(doc.contains(field), std::string("model document missing '") + field + "'");
  }
  ModelArtifact m;
  m.task = task_from_string(doc["task"].get<std::string>());
  m.kind = model_kind_from_string(doc["kind"].get<std::string>());
  m.arity = doc["arity"].get<std::size_t>();

  if (doc.contains("transforms")) {
    for (const auto& tj : doc["transforms"]) {
      m.transforms.push_back(transform_from_json(tj));
    }
  }
  // Width fed to the body is the chain's final output width; validate_model
  // checks that each link matches the previous one.
  m.body_width = m.arity;
  for (const Transform& t : m.transforms) m.body_width = t.output_width();

  const nlohmann::json& body = doc["body"];
  switch (m.kind) {
    case ModelKind::Linear: {
      require(body.contains("weights") && body.contains("bias"),
              "linear body needs 'weights' and 'bias'");
      if (body["weights"].is_array() && !body["weights"].empty() &&
          body["weights"][0].is_array()) {
        m.out_width = body["weights"].size();
        for (const auto& row : body["weights"]) {
          const auto r = detail::parse_double_array(row, "linear weights row");
          m.linear.weights.insert(m.linear.weights.end(), r.begin(), r.end());
        }
        m.linear.bias = detail::parse_double_array(body["bias"], "linear bias");
      } else {
        m.out_width = 1;
        m.linear.weights = detail::parse_double_array(body["weights"], "linear weights");
        require(body["bias"].is_number(), "linear bias must be a number");
        m.linear.bias = {body["bias"].get<double>()};
      }
      m.linear.out_width = m.out_width;
      break;
    }
    case ModelKind::TreeEnsemble: {
      require(body.contains("trees") && body["trees"].is_array() &&
                  !body["trees"].empty(),
              "tree ensemble body needs a non-empty 'trees' array");
      m.out_width = detail::leaf_out_width(body["trees"][0]);
      for (std::size_t t = 0; t < body["trees"].size(); ++t) {
        Tree tree;
        detail::flatten_tree_node(body["trees"][t], tree, m.out_width,
                                  "tree " + std::to_string(t));
        m.ensemble.trees.push_back(std::move(tree));
      }
      const std::string combine =
          body.contains("combine") ? body["combine"].get<std::string>() : "average";
      if (combine == "average") {
        m.ensemble.combine = TreeCombine::Average;
      } else if (combine == "sum") {
        m.ensemble.combine = TreeCombine::Sum;
      } else {
        fail("unknown tree combine mode: '" + combine + "'");
      }
      m.ensemble.base_score =
          body.contains("base_score") ? body["base_score"].get<double>() : 0.0;
      break;
    }
    case ModelKind::Mlp: {
      require(body.contains("layers") && body["layers"].is_array(),
              "mlp body needs a 'layers' array");
      for (std::size_t l = 0; l < body["layers"].size(); ++l) {
        const auto& lj = body["layers"][l];
        MlpLayer layer;
        require(lj.contains("weights") && lj.contains("bias") &&
                    lj.contains("activation"),
                "mlp layer " + std::to_string(l) + " needs weights/bias/activation");
        layer.out_width = lj["weights"].size();
        require(layer.out_width > 0, "mlp layer " + std::to_string(l) + " is empty");
        layer.in_width = lj["weights"][0].size();
        for (const auto& row : lj["weights"]) {
          const auto r = detail::parse_double_array(row, "mlp weights row");
          require(r.size() == layer.in_width,
                  "mlp layer " + std::to_string(l) + ": ragged weights");
          layer.weights.insert(layer.weights.end(), r.begin(), r.end());
        }
        layer.bias = detail::parse_double_array(lj["bias"], "mlp bias");
        const std::string act = lj["activation"].get<std::string>();
        if (act == "relu") layer.activation = Activation::Relu;
        else if (act == "identity") layer.activation = Activation::Identity;
        else if (act == "softmax") layer.activation = Activation::Softmax;
        else fail("unknown activation: '" + act + "'");
        m.mlp.layers.push_back(std::move(layer));
      }
      m.out_width = m.mlp.layers.back().out_width;
      break;
    }
  }
  validate_model(m);
  return m;
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open model file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    fail(path + ": invalid JSON: " + e.what());
  }
  return model_from_json(doc);
}

// Canonical serialization: fixed field order so load -> save round-trips
// byte-exactly.
inline nlohmann::ordered_json model_to_json(const ModelArtifact& m) {
  nlohmann::ordered_json doc;
  doc["task"] = task_name(m.task);
  doc["kind"] = model_kind_name(m.kind);
  doc["arity"] = m.arity;
  doc["transforms"] = nlohmann::ordered_json::array();
  for (const Transform& t : m.transforms) {
    nlohmann::ordered_json tj;
    if (t.kind == TransformKind::StandardScaler) {
      tj["type"] = "standard_scaler";
      tj["mean"] = t.mean;
      tj["scale"] = t.scale;
    } else {
      tj["type"] = "onehot";
      tj["categories"] = t.categories;
    }
    doc["transforms"].push_back(std::move(tj));
  }
  nlohmann::ordered_json body;
  switch (m.kind) {
    case ModelKind::Linear: {
      if (m.out_width == 1) {
        body["weights"] = m.linear.weights;
        body["bias"] = m.linear.bias[0];
      } else {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t o = 0; o < m.out_width; ++o) {
          rows.push_back(std::vector<double>(
              m.linear.weights.begin() + o * m.body_width,
              m.linear.weights.begin() + (o + 1) * m.body_width));
        }
        body["weights"] = std::move(rows);
        body["bias"] = m.linear.bias;
      }
      break;
    }
    case ModelKind::TreeEnsemble: {
      body["combine"] = m.ensemble.combine == TreeCombine::Average ? "average" : "sum";
      body["base_score"] = m.ensemble.base_score;
      nlohmann::ordered_json trees = nlohmann::ordered_json::array();
      for (const Tree& tree : m.ensemble.trees) {
        trees.push_back(detail::tree_node_to_json(tree, 0, m.out_width));
      }
      body["trees"] = std::move(trees);
      break;
    }
    case ModelKind::Mlp: {
      nlohmann::ordered_json layers = nlohmann::ordered_json::array();
      for (const MlpLayer& layer : m.mlp.layers) {
        nlohmann::ordered_json lj;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t o = 0; o < layer.out_width; ++o) {
          rows.push_back(std::vector<double>(
              layer.weights.begin() + o * layer.in_width,
              layer.weights.begin() + (o + 1) * layer.in_width));
        }
        lj["weights"] = std::move(rows);
        lj["bias"] = layer.bias;
        lj["activation"] = layer.activation == Activation::Relu ? "relu"
                           : layer.activation == Activation::Identity ? "identity"
                                                                      : "softmax";
        layers.push_back(std::move(lj));
      }
      body["layers"] = std::move(layers);
      break;
    }
  }
  doc["body"] = std::move(body);
  return doc;
}

inline void save_model(const ModelArtifact& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write model file: " + path);
  out << model_to_json(m).dump(2) << "\n";
}

}  // namespace apx
