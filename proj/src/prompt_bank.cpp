#include "reformkit/prompt_bank.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "reformkit/digest.hpp"
#include "reformkit/errors.hpp"

namespace reformkit {

// Defined in the generated builtin_prompts.cpp: (file name, YAML text) pairs.
std::vector<std::pair<std::string, std::string>> builtin_prompt_sources();

namespace {

constexpr char kUnitSep = '\x1F';
constexpr char kRecordSep = '\x1E';

bool is_name_start(char c) { return c >= 'a' && c <= 'z'; }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '_'; }

// Walks a body, calling on_text for literal runs and on_var for placeholders.
template <typename OnText, typename OnVar>
void scan_body(std::string_view body, OnText&& on_text, OnVar&& on_var) {
    std::size_t i = 0;
    while (i < body.size()) {
        char c = body[i];
        if (c == '{') {
            if (i + 1 < body.size() && body[i + 1] == '{') {
                on_text(std::string_view("{"));
                i += 2;
                continue;
            }
            std::size_t j = i + 1;
            if (j < body.size() && is_name_start(body[j])) {
                while (j < body.size() && is_name_char(body[j])) ++j;
                if (j < body.size() && body[j] == '}') {
                    on_var(body.substr(i + 1, j - i - 1));
                    i = j + 1;
                    continue;
                }
            }
            throw SchemaError("template body", "unescaped '{' at offset " + std::to_string(i) +
                                                   " (write '{{' for a literal brace)");
        }
        if (c == '}') {
            if (i + 1 < body.size() && body[i + 1] == '}') {
                on_text(std::string_view("}"));
                i += 2;
                continue;
            }
            throw SchemaError("template body", "unescaped '}' at offset " + std::to_string(i) +
                                                   " (write '}}' for a literal brace)");
        }
        auto next = body.find_first_of("{}", i);
        if (next == std::string_view::npos) next = body.size();
        on_text(body.substr(i, next - i));
        i = next;
    }
}

std::string scalar_string(const YAML::Node& node, const std::string& where) {
    if (!node || !node.IsScalar()) throw SchemaError(where, "expected a string");
    return node.as<std::string>();
}

PromptTemplate parse_template(const YAML::Node& doc, const std::string& origin) {
    if (!doc.IsMap()) throw SchemaError(origin, "template document must be a mapping");
    PromptTemplate t;
    t.origin = origin;
    t.id = scalar_string(doc["id"], origin + ": id");
    if (t.id.empty()) throw SchemaError(origin + ": id", "must be non-empty");
    const auto where = origin + ": " + t.id;

    try {
        if (!doc["version"] || !doc["version"].IsScalar()) throw SchemaError(where + ".version", "missing");
        t.version = doc["version"].as<int>();
    } catch (const YAML::Exception&) {
        throw SchemaError(where + ".version", "must be an integer");
    }
    if (t.version < 1) throw SchemaError(where + ".version", "must be a positive integer");

    t.method = doc["method"] ? scalar_string(doc["method"], where + ".method") : "shared";

    const auto vars = doc["variables"];
    if (vars) {
        if (!vars.IsSequence()) throw SchemaError(where + ".variables", "must be a list of names");
        for (const auto& v : vars) {
            auto name = scalar_string(v, where + ".variables");
            if (name.empty() || !is_name_start(name[0]) || !std::all_of(name.begin(), name.end(), is_name_char)) {
                throw SchemaError(where + ".variables", "invalid variable name '" + name + "'");
            }
            t.variables.insert(name);
        }
    }

    const auto meta = doc["metadata"];
    if (!meta || !meta.IsMap()) throw SchemaError(where + ".metadata", "missing mapping");
    for (const auto& kv : meta) {
        auto key = kv.first.as<std::string>();
        t.metadata[key] = scalar_string(kv.second, where + ".metadata." + key);
    }
    if (!t.metadata.contains("description")) throw SchemaError(where + ".metadata.description", "missing");

    const auto msgs = doc["messages"];
    if (!msgs || !msgs.IsSequence() || msgs.size() == 0) {
        throw SchemaError(where + ".messages", "must be a non-empty list");
    }
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        const auto mwhere = where + ".messages[" + std::to_string(i) + "]";
        const auto& m = msgs[i];
        if (!m.IsMap()) throw SchemaError(mwhere, "must be a mapping with role and body");
        auto role_text = scalar_string(m["role"], mwhere + ".role");
        auto role = parse_role(role_text);
        if (!role) throw SchemaError(mwhere + ".role", "unknown role '" + role_text + "'");
        t.messages.push_back(Message{*role, scalar_string(m["body"], mwhere + ".body")});
    }

    std::set<std::string> used;
    for (std::size_t i = 0; i < t.messages.size(); ++i) {
        std::vector<std::string> names;
        try {
            names = placeholders_in(t.messages[i].body);
        } catch (const SchemaError& e) {
            throw SchemaError(where + ".messages[" + std::to_string(i) + "].body", e.what());
        }
        for (auto& name : names) {
            if (!t.variables.contains(name)) {
                throw UndeclaredPlaceholder(where + ": placeholder '{" + name + "}' is not declared in variables");
            }
            used.insert(std::move(name));
        }
    }
    for (const auto& v : t.variables) {
        if (!used.contains(v)) throw SchemaError(where + ".variables", "declared variable '" + v + "' is never used");
    }
    return t;
}

std::vector<PromptTemplate> parse_documents(std::string_view yaml, const std::string& origin) {
    std::vector<YAML::Node> docs;
    try {
        docs = YAML::LoadAll(std::string(yaml));
    } catch (const YAML::Exception& e) {
        throw SchemaError(origin, e.what());
    }
    std::vector<PromptTemplate> out;
    for (const auto& doc : docs) {
        if (doc.IsNull()) continue;
        out.push_back(parse_template(doc, origin));
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

const char* to_string(Role role) noexcept {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
    if (text == "system") return Role::system;
    if (text == "user") return Role::user;
    if (text == "assistant") return Role::assistant;
    return std::nullopt;
}

std::string messages_fingerprint(const std::vector<Message>& messages) {
    std::string canon;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i > 0) canon.push_back(kRecordSep);
        canon += to_string(messages[i].role);
        canon.push_back(kUnitSep);
        canon += messages[i].body;
    }
    return sha256_hex(canon);
}

std::string prompt_fingerprint(std::string_view id, int version, const std::vector<Message>& messages) {
    std::string canon(id);
    canon.push_back(kRecordSep);
    canon += std::to_string(version);
    for (const auto& m : messages) {
        canon.push_back(kRecordSep);
        canon += to_string(m.role);
        canon.push_back(kUnitSep);
        canon += m.body;
    }
    return sha256_hex(canon);
}

std::string template_fingerprint(const PromptTemplate& tmpl) {
    return prompt_fingerprint(tmpl.id, tmpl.version, tmpl.messages);
}

std::vector<std::string> placeholders_in(std::string_view body) {
    std::vector<std::string> names;
    scan_body(
        body, [](std::string_view) {},
        [&](std::string_view name) {
            if (std::find(names.begin(), names.end(), name) == names.end()) names.emplace_back(name);
        });
    return names;
}

RenderedPrompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& v : tmpl.variables) {
        if (!vars.contains(v)) throw MissingVariable(v);
    }
    RenderedPrompt out;
    out.template_id = tmpl.id;
    out.template_version = tmpl.version;
    for (const auto& m : tmpl.messages) {
        std::string body;
        body.reserve(m.body.size());
        scan_body(
            m.body, [&](std::string_view text) { body += text; },
            [&](std::string_view name) {
                auto it = vars.find(std::string(name));
                if (it == vars.end()) throw MissingVariable(std::string(name));
                body += it->second;
            });
        out.messages.push_back(Message{m.role, std::move(body)});
    }
    for (const auto& [name, _] : vars) {
        if (!tmpl.variables.contains(name)) out.ignored_variables.push_back(name);
    }
    out.fingerprint = prompt_fingerprint(tmpl.id, tmpl.version, out.messages);
    return out;
}

PromptBank PromptBank::load(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) throw IoError("prompt bank path '" + path.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path, ec)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension().string();
            if (ext == ".yaml" || ext == ".yml") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    PromptBank bank;
    for (const auto& file : files) {
        for (auto& t : parse_documents(read_file(file), file.string())) bank.add(std::move(t));
    }
    return bank;
}

PromptBank PromptBank::from_yaml(std::string_view yaml, const std::string& origin) {
    PromptBank bank;
    for (auto& t : parse_documents(yaml, origin)) bank.add(std::move(t));
    return bank;
}

const PromptBank& PromptBank::builtin() {
    static const PromptBank bank = [] {
        PromptBank b;
        for (const auto& [name, text] : builtin_prompt_sources()) {
            for (auto& t : parse_documents(text, "builtin:" + name)) b.add(std::move(t));
        }
        return b;
    }();
    return bank;
}

void PromptBank::add(PromptTemplate tmpl) {
    auto& versions = templates_[tmpl.id];
    if (auto it = versions.find(tmpl.version); it != versions.end()) {
        throw DuplicateVersion("template " + tmpl.key() + " defined twice (" + it->second.origin + ", " +
                               tmpl.origin + ")");
    }
    versions.emplace(tmpl.version, std::move(tmpl));
}

const PromptTemplate& PromptBank::get(std::string_view id, std::optional<int> version) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw UnknownTemplate("unknown prompt template '" + std::string(id) + "'");
    const auto& versions = it->second;
    if (!version) return versions.rbegin()->second;
    auto vit = versions.find(*version);
    if (vit == versions.end()) {
        throw UnknownVersion("prompt template '" + std::string(id) + "' has no version " + std::to_string(*version));
    }
    return vit->second;
}

bool PromptBank::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

std::vector<int> PromptBank::versions(std::string_view id) const {
    std::vector<int> out;
    if (auto it = templates_.find(id); it != templates_.end()) {
        for (const auto& [v, _] : it->second) out.push_back(v);
    }
    return out;
}

std::vector<TemplateSummary> PromptBank::list_templates(std::optional<std::string_view> method_filter) const {
    std::vector<TemplateSummary> rows;
    for (const auto& [id, versions] : templates_) {
        for (const auto& [v, t] : versions) {
            if (method_filter && t.method != *method_filter) continue;
            rows.push_back(TemplateSummary{id, v, t.method, t.metadata.at("description")});
        }
    }
    return rows;
}

std::size_t PromptBank::size() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, versions] : templates_) n += versions.size();
    return n;
}

}  // namespace reformkit
