#include "slim/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace slim::pipeline {

namespace {

using nlohmann::json;

// Reads fields from one JSON object, remembering which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(at(key), "wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(at(k), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) Fields::fail(where, what);
}

}  // namespace

std::string_view name(Backend b) { return b == Backend::Synthetic ? "synthetic" : "tiny-transformer"; }

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  Fields f(j, "");

  std::string backend = std::string(name(c.backend));
  f.read("backend", backend);
  if (backend == "synthetic") {
    c.backend = Backend::Synthetic;
  } else if (backend == "tiny-transformer") {
    c.backend = Backend::TinyTransformer;
  } else {
    Fields::fail("backend", "expected \"synthetic\" or \"tiny-transformer\", got \"" + backend + "\"");
  }
  f.read("seed", c.seed);

  if (const json* props = f.sub("properties")) {
    require(props->is_array() && !props->empty(), "properties", "expected a nonempty array");
    c.properties.clear();
    for (const auto& p : *props) {
      const auto prop = p.is_string() ? chem::property_from_name(p.get<std::string>()) : std::nullopt;
      require(prop.has_value(), "properties", "unknown property " + p.dump());
      require(std::find(c.properties.begin(), c.properties.end(), *prop) == c.properties.end(), "properties",
              "duplicate " + p.dump());
      c.properties.push_back(*prop);
    }
  }
  std::string dir = "up";
  f.read("direction", dir);
  const auto d = editor::dir_from_name(dir);
  require(d.has_value(), "direction", "expected \"up\" or \"down\"");
  c.direction = *d;
  std::string work = c.work_dir.string();
  f.read("work_dir", work);
  require(!work.empty(), "work_dir", "must not be empty");
  c.work_dir = work;
  f.read("interpret_top_n", c.interpret_top_n);
  require(c.interpret_top_n >= 1, "interpret_top_n", "must be positive");

  if (const json* s = f.sub("synthetic")) {
    Fields g(*s, "synthetic");
    auto& x = c.synthetic;
    g.read("layers", x.layers);
    g.read("width", x.width);
    g.read("planted_layer", x.planted_layer);
    g.read("noise", x.noise);
    g.read("kappa", x.kappa);
    g.read("kappa_prior", x.kappa_prior);
    g.read("crosstalk", x.crosstalk);
    g.read("logit_scale", x.logit_scale);
    g.read("seed", x.seed);
    g.finish();
    require(x.layers >= 1 && x.width >= 6, "synthetic", "needs layers >= 1 and width >= 6");
    require(x.planted_layer >= 0 && x.planted_layer < x.layers, "synthetic.planted_layer", "out of range");
    require(x.noise >= 0, "synthetic.noise", "must be nonnegative");
  }
  if (const json* t = f.sub("transformer")) {
    Fields g(*t, "transformer");
    auto& x = c.transformer;
    g.read("layers", x.layers);
    g.read("width", x.width);
    g.read("heads", x.heads);
    g.read("ff", x.ff);
    g.read("context", x.context);
    g.read("seed", x.seed);
    g.finish();
    require(x.layers >= 1 && x.width >= 1 && x.heads >= 1 && x.ff >= 1, "transformer", "sizes must be positive");
    require(x.width % x.heads == 0, "transformer.heads", "must divide width");
    require(x.context >= 8, "transformer.context", "must be at least 8");
  }
  if (const json* t = f.sub("train")) {
    Fields g(*t, "train");
    auto& x = c.train;
    g.read("epochs", x.epochs);
    g.read("batch", x.batch);
    g.read("lr", x.lr);
    g.read("clip_norm", x.clip_norm);
    g.read("holdout", x.holdout);
    g.read("seed", x.seed);
    g.finish();
    require(x.epochs >= 1 && x.batch >= 1 && x.lr > 0, "train", "epochs, batch and lr must be positive");
    require(x.holdout >= 0 && x.holdout < 1, "train.holdout", "must lie in [0, 1)");
  }
  if (const json* t = f.sub("data")) {
    Fields g(*t, "data");
    auto& x = c.data;
    g.read("scan_molecules", x.scan_molecules);
    g.read("sae_molecules", x.sae_molecules);
    g.read("pairs_per_property", x.pairs_per_property);
    g.read("corpus_pairs", x.corpus_pairs);
    g.read("corpus_off_target", x.corpus_off_target);
    g.read("validation", x.validation);
    g.read("test", x.test);
    g.read("min_atoms", x.min_atoms);
    g.read("max_atoms", x.max_atoms);
    g.finish();
    require(x.scan_molecules >= 100, "data.scan_molecules", "must be at least 100");
    require(x.sae_molecules >= 8, "data.sae_molecules", "must be at least 8");
    require(x.pairs_per_property >= 1 && x.corpus_pairs >= 1, "data", "pair counts must be positive");
    require(x.corpus_off_target >= 0 && x.corpus_off_target < 1, "data.corpus_off_target", "must be in [0, 1)");
    require(x.validation >= 1 && x.test >= 1, "data", "validation and test sizes must be positive");
    require(x.min_atoms >= 1 && x.max_atoms >= x.min_atoms, "data", "bad atom range");
  }
  if (const json* t = f.sub("sae")) {
    Fields g(*t, "sae");
    auto& x = c.sae;
    g.read("expansion", x.expansion);
    g.read("k", x.k);
    g.read("tau_c", x.tau_c);
    g.read("head_hidden", x.head_hidden);
    g.read("proj_hidden", x.proj_hidden);
    g.read("proj_out", x.proj_out);
    g.read("lr", x.lr);
    g.read("batch", x.batch);
    g.read("epochs", x.epochs);
    g.read("seed", x.seed);
    if (const json* l = g.sub("lambda")) {
      Fields h(*l, "sae.lambda");
      h.read("contrast", x.lambda.contrast);
      h.read("sup", x.lambda.sup);
      h.read("sparse", x.lambda.sparse);
      h.read("grad", x.lambda.grad);
      h.finish();
      require(x.lambda.contrast >= 0 && x.lambda.sup >= 0 && x.lambda.sparse >= 0 && x.lambda.grad >= 0,
              "sae.lambda", "weights must be nonnegative");
    }
    g.finish();
    require(x.expansion >= 1 && x.k >= 1 && x.batch >= 1 && x.epochs >= 1 && x.lr > 0, "sae",
            "sizes and lr must be positive");
    require(x.tau_c > 0, "sae.tau_c", "must be positive");
  }
  if (const json* t = f.sub("steer")) {
    Fields g(*t, "steer");
    auto& x = c.steer;
    g.read("alpha_grid", x.alpha_grid);
    g.read("n", x.n);
    g.read("temperature", x.temperature);
    g.read("top_p", x.top_p);
    g.read("max_tokens", x.max_tokens);
    g.read("tau", x.tau);
    g.finish();
    require(!x.alpha_grid.empty(), "steer.alpha_grid", "must not be empty");
    require(x.n >= 1 && x.max_tokens >= 1, "steer", "n and max_tokens must be positive");
    require(x.temperature > 0 && x.top_p > 0 && x.top_p <= 1, "steer", "bad sampling parameters");
  }
  f.finish();
  c.sae.properties = c.properties;
  c.sae.d = c.backend == Backend::Synthetic ? c.synthetic.width : c.transformer.width;
  return c;
}

PipelineConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config: line " + std::to_string(line) + ": invalid JSON");
  }
  return parse_config(j);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return parse_config_text(s.str());
}

nlohmann::json to_json(const PipelineConfig& c) {
  json props = json::array();
  for (auto p : c.properties) props.push_back(std::string(chem::name(p)));
  const auto& s = c.synthetic;
  const auto& t = c.transformer;
  const auto& d = c.data;
  const auto& a = c.sae;
  return {{"backend", std::string(name(c.backend))},
          {"seed", c.seed},
          {"properties", props},
          {"direction", std::string(editor::name(c.direction))},
          {"work_dir", c.work_dir.string()},
          {"interpret_top_n", c.interpret_top_n},
          {"synthetic",
           {{"layers", s.layers},
            {"width", s.width},
            {"planted_layer", s.planted_layer},
            {"noise", s.noise},
            {"kappa", s.kappa},
            {"kappa_prior", s.kappa_prior},
            {"crosstalk", s.crosstalk},
            {"logit_scale", s.logit_scale},
            {"seed", s.seed}}},
          {"transformer",
           {{"layers", t.layers},
            {"width", t.width},
            {"heads", t.heads},
            {"ff", t.ff},
            {"context", t.context},
            {"seed", t.seed}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch", c.train.batch},
            {"lr", c.train.lr},
            {"clip_norm", c.train.clip_norm},
            {"holdout", c.train.holdout},
            {"seed", c.train.seed}}},
          {"data",
           {{"scan_molecules", d.scan_molecules},
            {"sae_molecules", d.sae_molecules},
            {"pairs_per_property", d.pairs_per_property},
            {"corpus_pairs", d.corpus_pairs},
            {"corpus_off_target", d.corpus_off_target},
            {"validation", d.validation},
            {"test", d.test},
            {"min_atoms", d.min_atoms},
            {"max_atoms", d.max_atoms}}},
          {"sae",
           {{"expansion", a.expansion},
            {"k", a.k},
            {"lambda",
             {{"contrast", a.lambda.contrast},
              {"sup", a.lambda.sup},
              {"sparse", a.lambda.sparse},
              {"grad", a.lambda.grad}}},
            {"tau_c", a.tau_c},
            {"head_hidden", a.head_hidden},
            {"proj_hidden", a.proj_hidden},
            {"proj_out", a.proj_out},
            {"lr", a.lr},
            {"batch", a.batch},
            {"epochs", a.epochs},
            {"seed", a.seed}}},
          {"steer",
           {{"alpha_grid", c.steer.alpha_grid},
            {"n", c.steer.n},
            {"temperature", c.steer.temperature},
            {"top_p", c.steer.top_p},
            {"max_tokens", c.steer.max_tokens},
            {"tau", c.steer.tau}}}};
}

}  // namespace slim::pipeline
