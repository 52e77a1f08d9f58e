#pragma once

#include <posehyp/common.hpp>

#include <json.hpp>

#include <cctype>
#include <sstream>
#include <string>

namespace posehyp::toml_lite {

// Subset of TOML mapped onto JSON: [table] and [[array-of-tables]] headers with
// dotted names, bare or quoted keys, basic strings, integers, floats, booleans,
// (multi-line) arrays and inline tables. Dates and literal strings are rejected.

namespace detail {

    class Parser {
    public:
        explicit Parser(std::string text) : _s(std::move(text)) {}

        nlohmann::json parse()
        {
            nlohmann::json root = nlohmann::json::object();
            nlohmann::json* table = &root;
            for (;;) {
                _skip_ws_and_comments(true);
                if (_eof())
                    break;
                if (_peek() == '[') {
                    const bool array = _s.compare(_pos, 2, "[[") == 0;
                    _pos += array ? 2 : 1;
                    const auto path = _key_path(']');
                    _expect(']');
                    if (array)
                        _expect(']');
                    table = &_open(root, path, array);
                }
                else {
                    const auto path = _key_path('=');
                    _expect('=');
                    nlohmann::json* target = table;
                    for (std::size_t i = 0; i + 1 < path.size(); ++i)
                        target = &_child_table(*target, path[i]);
                    if (target->contains(path.back()))
                        _fail("duplicate key '" + path.back() + "'");
                    (*target)[path.back()] = _value();
                }
                _skip_inline_ws();
                if (!_eof() && _peek() == '#')
                    _skip_comment();
                if (!_eof() && _peek() != '\n' && _peek() != '\r')
                    _fail("expected end of line");
            }
            return root;
        }

    private:
        bool _eof() const { return _pos >= _s.size(); }
        char _peek() const { return _s[_pos]; }

        [[noreturn]] void _fail(const std::string& msg) const
        {
            const auto line = 1 + std::count(_s.begin(), _s.begin() + static_cast<std::ptrdiff_t>(std::min(_pos, _s.size())), '\n');
            throw FormatError("TOML line " + std::to_string(line) + ": " + msg);
        }

        void _expect(char c)
        {
            _skip_inline_ws();
            if (_eof() || _peek() != c)
                _fail(std::string("expected '") + c + "'");
            ++_pos;
        }

        void _skip_inline_ws()
        {
            while (!_eof() && (_peek() == ' ' || _peek() == '\t'))
                ++_pos;
        }
        void _skip_comment()
        {
            while (!_eof() && _peek() != '\n')
                ++_pos;
        }
        void _skip_ws_and_comments(bool newlines)
        {
            while (!_eof()) {
                const char c = _peek();
                if (c == ' ' || c == '\t' || (newlines && (c == '\n' || c == '\r')))
                    ++_pos;
                else if (c == '#')
                    _skip_comment();
                else
                    break;
            }
        }

        std::string _key()
        {
            _skip_inline_ws();
            if (_eof())
                _fail("expected key");
            if (_peek() == '"')
                return _string();
            const auto start = _pos;
            while (!_eof() && (std::isalnum(static_cast<unsigned char>(_peek())) || _peek() == '_' || _peek() == '-'))
                ++_pos;
            if (_pos == start)
                _fail("expected key");
            return _s.substr(start, _pos - start);
        }

        std::vector<std::string> _key_path(char terminator)
        {
            std::vector<std::string> path{_key()};
            _skip_inline_ws();
            while (!_eof() && _peek() == '.') {
                ++_pos;
                path.push_back(_key());
                _skip_inline_ws();
            }
            if (_eof() || _peek() != terminator)
                _fail(std::string("expected '") + terminator + "'");
            return path;
        }

        nlohmann::json& _child_table(nlohmann::json& parent, const std::string& key)
        {
            auto& child = parent[key];
            if (child.is_null())
                child = nlohmann::json::object();
            if (child.is_array() && !child.empty() && child.back().is_object())
                return child.back();
            if (!child.is_object())
                _fail("key '" + key + "' is not a table");
            return child;
        }

        nlohmann::json& _open(nlohmann::json& root, const std::vector<std::string>& path, bool array)
        {
            nlohmann::json* t = &root;
            for (std::size_t i = 0; i + 1 < path.size(); ++i)
                t = &_child_table(*t, path[i]);
            auto& slot = (*t)[path.back()];
            if (array) {
                if (slot.is_null())
                    slot = nlohmann::json::array();
                if (!slot.is_array())
                    _fail("'" + path.back() + "' is not an array of tables");
                slot.push_back(nlohmann::json::object());
                return slot.back();
            }
            if (slot.is_null())
                slot = nlohmann::json::object();
            if (!slot.is_object())
                _fail("'" + path.back() + "' is not a table");
            return slot;
        }

        std::string _string()
        {
            ++_pos; // opening quote
            std::string out;
            while (!_eof() && _peek() != '"') {
                char c = _s[_pos++];
                if (c == '\n')
                    _fail("unterminated string");
                if (c == '\\') {
                    if (_eof())
                        _fail("bad escape");
                    const char e = _s[_pos++];
                    switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: _fail(std::string("unsupported escape \\") + e);
                    }
                }
                out += c;
            }
            if (_eof())
                _fail("unterminated string");
            ++_pos;
            return out;
        }

        nlohmann::json _value()
        {
            _skip_inline_ws();
            if (_eof())
                _fail("expected value");
            const char c = _peek();
            if (c == '"')
                return _string();
            if (c == '[') {
                ++_pos;
                nlohmann::json arr = nlohmann::json::array();
                for (;;) {
                    _skip_ws_and_comments(true);
                    if (_eof())
                        _fail("unterminated array");
                    if (_peek() == ']') {
                        ++_pos;
                        return arr;
                    }
                    arr.push_back(_value());
                    _skip_ws_and_comments(true);
                    if (!_eof() && _peek() == ',')
                        ++_pos;
                    else if (_eof() || _peek() != ']')
                        _fail("expected ',' or ']'");
                }
            }
            if (c == '{') {
                ++_pos;
                nlohmann::json obj = nlohmann::json::object();
                _skip_inline_ws();
                if (!_eof() && _peek() == '}') {
                    ++_pos;
                    return obj;
                }
                for (;;) {
                    const auto path = _key_path('=');
                    _expect('=');
                    nlohmann::json* target = &obj;
                    for (std::size_t i = 0; i + 1 < path.size(); ++i)
                        target = &_child_table(*target, path[i]);
                    (*target)[path.back()] = _value();
                    _skip_inline_ws();
                    if (!_eof() && _peek() == ',') {
                        ++_pos;
                        continue;
                    }
                    _expect('}');
                    return obj;
                }
            }
            const auto start = _pos;
            while (!_eof() && !std::isspace(static_cast<unsigned char>(_peek())) && _peek() != ',' && _peek() != ']' &&
                _peek() != '}' && _peek() != '#')
                ++_pos;
            std::string tok = _s.substr(start, _pos - start);
            if (tok == "true")
                return true;
            if (tok == "false")
                return false;
            tok.erase(std::remove(tok.begin(), tok.end(), '_'), tok.end());
            if (tok == "inf" || tok == "+inf")
                return std::numeric_limits<double>::infinity();
            if (tok == "-inf")
                return -std::numeric_limits<double>::infinity();
            try {
                std::size_t used = 0;
                if (tok.find_first_of(".eE") == std::string::npos) {
                    const long long v = std::stoll(tok, &used);
                    if (used == tok.size())
                        return v;
                }
                else {
                    const double v = std::stod(tok, &used);
                    if (used == tok.size())
                        return v;
                }
            }
            catch (const std::exception&) {
            }
            _fail("unsupported value '" + tok + "'");
        }

        std::string _s;
        std::size_t _pos = 0;
    };

} // namespace detail

inline nlohmann::json parse(const std::string& text) { return detail::Parser(text).parse(); }

} // namespace posehyp::toml_lite
