package fig10;

public class Message {
  private final byte[] body;
  public Message(byte[] body) {
    this.body = body;
  }
  public byte[] getBody() {
    return body;
  }
}
