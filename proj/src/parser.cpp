#include <cctype>
#include <charconv>
#include <optional>
#include <string>

#include "flowgraph/config_ast.hpp"
#include "flowgraph/error.hpp"

namespace flowgraph {

namespace {

bool IsIdentStart(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool IsIdentChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool IsStreamName(std::string_view s) {
  if (s.empty() || !IsIdentStart(s[0])) return false;
  for (char c : s) {
    if (!IsIdentChar(c)) return false;
  }
  return true;
}

bool IsTag(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isupper(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
    return false;
  }
  for (char c : s) {
    if (!(std::isupper(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_')) {
      return false;
    }
  }
  return true;
}

enum class TokKind { kIdent, kString, kInt, kFloat, kBool, kColon, kLBrace, kRBrace, kEnd };

struct Token {
  TokKind kind = TokKind::kEnd;
  std::string text;   // ident / string contents
  int64_t int_value = 0;
  double float_value = 0;
  bool bool_value = false;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  const Token& Peek() {
    if (!lookahead_) lookahead_ = Lex();
    return *lookahead_;
  }

  Token Next() {
    Token t = Peek();
    lookahead_.reset();
    return t;
  }

  [[noreturn]] void Fail(const Token& at, const std::string& expected) const {
    throw ParseError(at.line, at.col,
                     "expected " + expected + ", got " + Describe(at));
  }

 private:
  static std::string Describe(const Token& t) {
    switch (t.kind) {
      case TokKind::kIdent: return "'" + t.text + "'";
      case TokKind::kString: return "string \"" + t.text + "\"";
      case TokKind::kInt: return "integer " + std::to_string(t.int_value);
      case TokKind::kFloat: return "number";
      case TokKind::kBool: return t.bool_value ? "'true'" : "'false'";
      case TokKind::kColon: return "':'";
      case TokKind::kLBrace: return "'{'";
      case TokKind::kRBrace: return "'}'";
      case TokKind::kEnd: return "end of input";
    }
    return "?";
  }

  char Cur() const { return text_[pos_]; }
  bool AtEnd() const { return pos_ >= text_.size(); }

  void Advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void SkipSpaceAndComments() {
    while (!AtEnd()) {
      if (std::isspace(static_cast<unsigned char>(Cur()))) {
        Advance();
      } else if (Cur() == '#') {
        while (!AtEnd() && Cur() != '\n') Advance();
      } else {
        break;
      }
    }
  }

  Token Lex() {
    SkipSpaceAndComments();
    Token t;
    t.line = line_;
    t.col = col_;
    if (AtEnd()) {
      t.kind = TokKind::kEnd;
      return t;
    }
    char c = Cur();
    if (c == ':') {
      Advance();
      t.kind = TokKind::kColon;
      return t;
    }
    if (c == '{') {
      Advance();
      t.kind = TokKind::kLBrace;
      return t;
    }
    if (c == '}') {
      Advance();
      t.kind = TokKind::kRBrace;
      return t;
    }
    if (c == '"') return LexString(t);
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
      return LexNumber(t);
    }
    if (IsIdentStart(c)) {
      std::string ident;
      while (!AtEnd() && IsIdentChar(Cur())) {
        ident.push_back(Cur());
        Advance();
      }
      if (ident == "true" || ident == "false") {
        t.kind = TokKind::kBool;
        t.bool_value = ident == "true";
      } else {
        t.kind = TokKind::kIdent;
        t.text = std::move(ident);
      }
      return t;
    }
    throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
  }

  Token LexString(Token t) {
    Advance();  // opening quote
    std::string out;
    while (true) {
      if (AtEnd() || Cur() == '\n') {
        throw ParseError(t.line, t.col, "unterminated string");
      }
      char c = Cur();
      if (c == '"') {
        Advance();
        break;
      }
      if (c == '\\') {
        Advance();
        if (AtEnd()) throw ParseError(t.line, t.col, "unterminated string");
        char esc = Cur();
        switch (esc) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default:
            throw ParseError(line_, col_,
                             std::string("unknown escape '\\") + esc + "'");
        }
        Advance();
      } else {
        out.push_back(c);
        Advance();
      }
    }
    t.kind = TokKind::kString;
    t.text = std::move(out);
    return t;
  }

  Token LexNumber(Token t) {
    std::string digits;
    bool is_float = false;
    if (Cur() == '-') {
      digits.push_back('-');
      Advance();
    }
    while (!AtEnd() && (std::isdigit(static_cast<unsigned char>(Cur())) ||
                        Cur() == '.' || Cur() == 'e' || Cur() == 'E' ||
                        Cur() == '+' || Cur() == '-')) {
      if (Cur() == '.' || Cur() == 'e' || Cur() == 'E') is_float = true;
      // '+'/'-' only legal right after an exponent marker.
      if ((Cur() == '+' || Cur() == '-') && !digits.empty() &&
          !(digits.back() == 'e' || digits.back() == 'E')) {
        break;
      }
      digits.push_back(Cur());
      Advance();
    }
    if (is_float) {
      t.kind = TokKind::kFloat;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(),
                                     t.float_value);
      if (ec != std::errc() || p != digits.data() + digits.size()) {
        throw ParseError(t.line, t.col, "malformed number '" + digits + "'");
      }
    } else {
      t.kind = TokKind::kInt;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(),
                                     t.int_value);
      if (ec != std::errc() || p != digits.data() + digits.size()) {
        throw ParseError(t.line, t.col, "malformed integer '" + digits + "'");
      }
    }
    return t;
  }

  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::optional<Token> lookahead_;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) {}

  GraphConfigAst ParseFile() {
    GraphConfigAst ast;
    while (lex_.Peek().kind != TokKind::kEnd) {
      Token key = Expect(TokKind::kIdent, "a top-level key, 'executor' or 'node'");
      if (key.text == "node") {
        ast.nodes.push_back(ParseNode(key));
      } else if (key.text == "executor") {
        ast.executors.push_back(ParseExecutor());
      } else {
        ParseGraphScalar(ast, key);
      }
    }
    return ast;
  }

 private:
  Token Expect(TokKind kind, const std::string& what) {
    if (lex_.Peek().kind != kind) lex_.Fail(lex_.Peek(), what);
    return lex_.Next();
  }

  StreamRef ParseStreamRef(const Token& key) {
    Expect(TokKind::kColon, "':'");
    Token value = Expect(TokKind::kString, "a quoted stream reference");
    StreamRef ref;
    auto colon = value.text.find(':');
    if (colon == std::string::npos) {
      ref.name = value.text;
    } else {
      ref.tag = value.text.substr(0, colon);
      ref.name = value.text.substr(colon + 1);
      if (!IsTag(ref.tag)) {
        throw ParseError(value.line, value.col,
                         "'" + ref.tag + "' is not a valid tag");
      }
    }
    if (!IsStreamName(ref.name)) {
      throw ParseError(value.line, value.col,
                       "'" + ref.name + "' is not a valid stream name");
    }
    (void)key;
    return ref;
  }

  int64_t ParseIntValue() {
    Expect(TokKind::kColon, "':'");
    Token v = Expect(TokKind::kInt, "an integer");
    return v.int_value;
  }

  bool ParseBoolValue() {
    Expect(TokKind::kColon, "':'");
    Token v = lex_.Next();
    if (v.kind != TokKind::kBool) lex_.Fail(v, "true or false");
    return v.bool_value;
  }

  std::string ParseStringValue() {
    Expect(TokKind::kColon, "':'");
    Token v = Expect(TokKind::kString, "a quoted string");
    return v.text;
  }

  void CheckOnce(bool& seen, const Token& key) {
    if (seen) {
      throw FlowError(ErrorCode::kDuplicateKey,
                      std::to_string(key.line) + ":" + std::to_string(key.col) +
                          ": duplicate key '" + key.text + "'");
    }
    seen = true;
  }

  void ParseGraphScalar(GraphConfigAst& ast, const Token& key) {
    if (key.text == "type") {
      CheckOnce(seen_type_, key);
      ast.type = ParseStringValue();
    } else if (key.text == "input_stream") {
      ast.input_streams.push_back(ParseStreamRef(key));
    } else if (key.text == "output_stream") {
      ast.output_streams.push_back(ParseStreamRef(key));
    } else if (key.text == "input_side_packet") {
      ast.input_side_packets.push_back(ParseStreamRef(key));
    } else if (key.text == "num_threads") {
      CheckOnce(seen_num_threads_, key);
      ast.num_threads = static_cast<int>(ParseIntValue());
    } else if (key.text == "max_queue_size") {
      CheckOnce(seen_max_queue_, key);
      ast.max_queue_size = static_cast<int>(ParseIntValue());
    } else if (key.text == "trace_enabled") {
      CheckOnce(seen_trace_, key);
      ast.trace_enabled = ParseBoolValue();
    } else {
      lex_.Fail(key, "a top-level key, 'executor' or 'node'");
    }
  }

  ExecutorConfig ParseExecutor() {
    Expect(TokKind::kLBrace, "'{'");
    ExecutorConfig exec;
    bool seen_name = false, seen_workers = false;
    while (lex_.Peek().kind != TokKind::kRBrace) {
      Token key = Expect(TokKind::kIdent, "'name', 'num_workers' or '}'");
      if (key.text == "name") {
        CheckOnce(seen_name, key);
        exec.name = ParseStringValue();
      } else if (key.text == "num_workers") {
        CheckOnce(seen_workers, key);
        exec.num_workers = static_cast<int>(ParseIntValue());
      } else {
        lex_.Fail(key, "'name' or 'num_workers'");
      }
    }
    lex_.Next();  // '}'
    if (exec.name.empty()) {
      throw FlowError(ErrorCode::kSyntaxError,
                      "executor block requires a name");
    }
    return exec;
  }

  NodeConfig ParseNode(const Token& node_key) {
    (void)node_key;
    Expect(TokKind::kLBrace, "'{'");
    NodeConfig node;
    bool seen_calc = false, seen_exec = false, seen_max_queue = false;
    while (lex_.Peek().kind != TokKind::kRBrace) {
      if (lex_.Peek().kind == TokKind::kEnd) {
        lex_.Fail(lex_.Peek(), "'}' closing node block");
      }
      Token key = Expect(TokKind::kIdent, "a node key or '}'");
      if (key.text == "calculator") {
        CheckOnce(seen_calc, key);
        node.calculator = ParseStringValue();
      } else if (key.text == "input_stream") {
        node.input_streams.push_back(ParseStreamRef(key));
      } else if (key.text == "output_stream") {
        node.output_streams.push_back(ParseStreamRef(key));
      } else if (key.text == "input_side_packet") {
        node.input_side_packets.push_back(ParseStreamRef(key));
      } else if (key.text == "output_side_packet") {
        node.output_side_packets.push_back(ParseStreamRef(key));
      } else if (key.text == "executor") {
        CheckOnce(seen_exec, key);
        node.executor = ParseStringValue();
      } else if (key.text == "back_edge") {
        Expect(TokKind::kColon, "':'");
        Token v = Expect(TokKind::kString, "a quoted input tag");
        if (!IsTag(v.text)) {
          throw ParseError(v.line, v.col,
                           "'" + v.text + "' is not a valid tag");
        }
        node.back_edges.push_back(v.text);
      } else if (key.text == "max_queue_size") {
        CheckOnce(seen_max_queue, key);
        node.max_queue_size = static_cast<int>(ParseIntValue());
      } else if (key.text == "options") {
        ParseOptions(node.options);
      } else {
        lex_.Fail(key, "a node key");
      }
    }
    lex_.Next();  // '}'
    if (node.calculator.empty()) {
      throw FlowError(ErrorCode::kSyntaxError,
                      "node block requires a calculator");
    }
    return node;
  }

  void ParseOptions(NodeOptions& options) {
    Expect(TokKind::kLBrace, "'{'");
    while (lex_.Peek().kind != TokKind::kRBrace) {
      Token key = Expect(TokKind::kIdent, "an option key or '}'");
      if (options.Has(key.text)) {
        throw FlowError(ErrorCode::kDuplicateKey,
                        std::to_string(key.line) + ":" +
                            std::to_string(key.col) + ": duplicate option '" +
                            key.text + "'");
      }
      Expect(TokKind::kColon, "':'");
      Token v = lex_.Next();
      switch (v.kind) {
        case TokKind::kString:
          options.Set(key.text, v.text);
          break;
        case TokKind::kInt:
          options.Set(key.text, v.int_value);
          break;
        case TokKind::kFloat:
          options.Set(key.text, v.float_value);
          break;
        case TokKind::kBool:
          options.Set(key.text, v.bool_value);
          break;
        default:
          lex_.Fail(v, "a value (string, number or boolean)");
      }
    }
    lex_.Next();  // '}'
  }

  Lexer lex_;
  bool seen_type_ = false;
  bool seen_num_threads_ = false;
  bool seen_max_queue_ = false;
  bool seen_trace_ = false;
};

}  // namespace

GraphConfigAst Parse(std::string_view text) {
  return Parser(text).ParseFile();
}

}  // namespace flowgraph
