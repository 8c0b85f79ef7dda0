#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace reformkit {

enum class Role { system, user, assistant };

const char* to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct Message {
    Role role = Role::user;
    std::string body;

    bool operator==(const Message&) const = default;
};

struct PromptTemplate {
    std::string id;
    int version = 1;
    std::string method;
    std::vector<Message> messages;
    std::set<std::string> variables;
    /// Always holds `description`; optionally `source`, `author`, `created`, and free-form keys.
    std::map<std::string, std::string> metadata;
    /// File the template was loaded from (informational).
    std::string origin;

    std::string key() const { return id + "@" + std::to_string(version); }
};

struct RenderedPrompt {
    std::vector<Message> messages;
    std::string template_id;
    int template_version = 0;
    std::string fingerprint;
    /// Variables supplied to render but not declared by the template.
    std::vector<std::string> ignored_variables;
};

/// Digest of a message list alone: role 0x1F body per message, joined by 0x1E.
std::string messages_fingerprint(const std::vector<Message>& messages);

/// Digest over id, version, then the messages, every part joined by 0x1E.
std::string prompt_fingerprint(std::string_view id, int version, const std::vector<Message>& messages);

/// Placeholder names referenced by `body`, in order of first appearance. Throws
/// SchemaError for a brace that is neither an escape nor a well-formed `{name}`.
std::vector<std::string> placeholders_in(std::string_view body);

/// Fingerprint of the unrendered template; identifies a bank entry in manifests.
std::string template_fingerprint(const PromptTemplate& tmpl);

RenderedPrompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars);

/// Listing row for `list_templates`.
struct TemplateSummary {
    std::string id;
    int version = 0;
    std::string method;
    std::string description;
};

/// Immutable set of validated templates keyed by (id, version).
class PromptBank {
  public:
    PromptBank() = default;

    /// `path` is a YAML file or a directory scanned recursively for *.yaml / *.yml.
    static PromptBank load(const std::filesystem::path& path);
    /// Parses YAML text (one or more documents). `origin` names the source in errors.
    static PromptBank from_yaml(std::string_view yaml, const std::string& origin);
    /// The templates compiled into the toolkit.
    static const PromptBank& builtin();

    /// Highest version when `version` is empty. Throws UnknownTemplate / UnknownVersion.
    const PromptTemplate& get(std::string_view id, std::optional<int> version = std::nullopt) const;
    bool contains(std::string_view id) const;
    std::vector<int> versions(std::string_view id) const;

    std::vector<TemplateSummary> list_templates(std::optional<std::string_view> method_filter = std::nullopt) const;
    std::size_t size() const noexcept;

  private:
    void add(PromptTemplate tmpl);

    std::map<std::string, std::map<int, PromptTemplate>, std::less<>> templates_;
};

}  // namespace reformkit
