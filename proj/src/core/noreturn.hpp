#pragma once

#include "cfg.hpp"
#include "slicing.hpp"

#include <set>
#include <string>
#include <string_view>

namespace ehfetch {

/// Names of library functions that never return, plus the two whose
/// behaviour depends on their first argument.
class NoReturnDb {
public:
    /// The shipped list.
    static NoReturnDb builtin();
    /// Parses list text: one name per line, '#' starts a comment.
    static NoReturnDb parse(std::string_view text);

    /// Adds every name from a list file. Throws Error(io) if unreadable.
    void extend_from_file(const std::string& path);
    void add(std::string name);

    bool is_noreturn(std::string_view name) const;
    bool is_conditional(std::string_view name) const;
    const std::set<std::string, std::less<>>& names() const { return names_; }

private:
    std::set<std::string, std::less<>> names_;
};

/// error/error_at_line: returns only when every definition of rdi reaching
/// the call is the constant 0. Anything else, including values from outside
/// the function, counts as non-returning.
ReturnStatus check_error_arg(const InsnGraph& g, Addr call_site);

}  // namespace ehfetch
